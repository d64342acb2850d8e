#include "losstomo/topology_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace losstomo {

using nlohmann::json;

std::string topology_to_json(const Topology& t) {
  json j;
  j["nodes"] = t.nodes();
  j["links"] = json::array();
  for (const Link& l : t.links())
    j["links"].push_back({{"id", l.id}, {"parent", l.parent}, {"child", l.child}});
  j["sources"] = json::array();
  for (const Source& s : t.sources()) j["sources"].push_back({{"id", s.id}, {"root", s.root}});
  json m = json::object();
  for (const Link& l : t.links()) m[std::to_string(l.id)] = t.link_sources(l.id);
  j["tree_membership"] = m;
  return j.dump(2);
}

Topology topology_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("topology file is not valid JSON: ") + e.what());
  }
  try {
    std::vector<NodeId> nodes = j.at("nodes").get<std::vector<NodeId>>();
    std::vector<Link> links;
    for (const auto& jl : j.at("links"))
      links.push_back({jl.at("id").get<LinkId>(), jl.at("parent").get<NodeId>(),
                       jl.at("child").get<NodeId>()});
    std::vector<Source> sources;
    for (const auto& js : j.at("sources"))
      sources.push_back({js.at("id").get<SourceId>(), js.at("root").get<NodeId>()});
    std::map<LinkId, std::vector<SourceId>> membership;
    if (j.contains("tree_membership"))
      for (const auto& [key, val] : j.at("tree_membership").items())
        membership[std::stoi(key)] = val.get<std::vector<SourceId>>();
    return Topology(std::move(nodes), std::move(links), std::move(sources),
                    std::move(membership));
  } catch (const json::exception& e) {
    throw InputError(std::string("bad topology schema: ") + e.what());
  }
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open topology file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return topology_from_json(ss.str());
}

void save_topology_file(const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write topology file " + path);
  out << topology_to_json(t) << '\n';
}

}  // namespace losstomo
