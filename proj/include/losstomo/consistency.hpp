#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "losstomo/statistics.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// Data-consistency circumstances. Flags are data; estimators never throw on
// them, they skip/clamp and record the matching flag.
enum class Flag {
  ZeroGammaSbrl,         // single-source subtree with no observations
  ZeroGammaSsnl,         // intersection link with one source observing nothing
  InfeasibleRate,        // estimate clamped into [0,1]
  Partition,             // children counts exactly partition the parent's
  MultiSourceZeroSum,    // sum over S(i) of gamma_i(s) is zero
  MultiSourcePartition,  // pooled partition at a multi-source node
};

const char* flag_name(Flag f);

struct ConsistencyReport {
  std::map<NodeId, std::vector<Flag>> node_flags;
  std::map<LinkId, std::vector<Flag>> link_flags;
  // informational per-source conditions (e.g. one source partitions but the
  // pooled counts rescue the node)
  std::map<NodeId, std::map<SourceId, std::vector<Flag>>> per_source_flags;
  std::vector<std::string> actions;  // prune/skip/clamp log

  void add_node(NodeId i, Flag f);
  void add_link(LinkId l, Flag f);
  void add_per_source(NodeId i, SourceId s, Flag f);
  bool node_has(NodeId i, Flag f) const;
  bool link_has(LinkId l, Flag f) const;
  std::map<Flag, int> summary() const;
  std::string flags_csv(LinkId l) const;  // |-joined names, "" when clean
};

enum class NodeDisposition {
  SourceRoot,
  Leaf,         // A(s,i) = gamma_hat directly
  Solve,        // branching node: solve the path polynomial
  Chain,        // single informative child: part of a composite path
  Unestimable,  // pruned or degenerate; reported as null
};

// What the estimators will do per node, derived from the precheck flags.
struct EstimationPlan {
  std::map<NodeId, NodeDisposition> nodes;
  std::set<NodeId> pruned;  // nodes inside removed (zero-observation) subtrees
  std::map<NodeId, std::vector<NodeId>> informative_children;
};

// Detects the extreme circumstances before estimation: zero gammas per link
// class, exact partitions (pooled and per source), all-zero multi-source
// nodes. Reporting only; never throws on data.
ConsistencyReport precheck(const StatTable& stats, const Topology& t);

// Turns the report into per-node dispositions: prunes unobserved subtrees,
// skips degenerate polynomials, keeps nodes alive when another source's
// probes rescue them.
EstimationPlan apply(const ConsistencyReport& report, const StatTable& stats, const Topology& t);

}  // namespace losstomo
