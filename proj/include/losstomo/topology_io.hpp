#pragma once

#include <string>

#include "losstomo/topology.hpp"

namespace losstomo {

// Topology file schema (JSON):
//   {
//     "nodes": [0, 1, ...],
//     "links": [{"id": 1, "parent": 0, "child": 1}, ...],
//     "sources": [{"id": 0, "root": 0}, ...],
//     "tree_membership": {"1": [0], "5": [0, 1], ...}
//   }
// tree_membership may be omitted; it is then inferred from reachability.
// Round-trips losslessly (ids are kept as given, never renumbered).
std::string topology_to_json(const Topology& t);
Topology topology_from_json(const std::string& json_text);

Topology load_topology_file(const std::string& path);
void save_topology_file(const Topology& t, const std::string& path);

}  // namespace losstomo
