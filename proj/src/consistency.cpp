#include "losstomo/consistency.hpp"

#include <algorithm>
#include <deque>

namespace losstomo {

const char* flag_name(Flag f) {
  switch (f) {
    case Flag::ZeroGammaSbrl: return "ZERO_GAMMA_SBRL";
    case Flag::ZeroGammaSsnl: return "ZERO_GAMMA_SSNL";
    case Flag::InfeasibleRate: return "INFEASIBLE_RATE";
    case Flag::Partition: return "PARTITION";
    case Flag::MultiSourceZeroSum: return "MULTI_SOURCE_ZERO_SUM";
    case Flag::MultiSourcePartition: return "MULTI_SOURCE_PARTITION";
  }
  return "?";
}

namespace {
void push_unique(std::vector<Flag>& v, Flag f) {
  if (std::find(v.begin(), v.end(), f) == v.end()) v.push_back(f);
}
}  // namespace

void ConsistencyReport::add_node(NodeId i, Flag f) { push_unique(node_flags[i], f); }
void ConsistencyReport::add_link(LinkId l, Flag f) { push_unique(link_flags[l], f); }
void ConsistencyReport::add_per_source(NodeId i, SourceId s, Flag f) {
  push_unique(per_source_flags[i][s], f);
}

bool ConsistencyReport::node_has(NodeId i, Flag f) const {
  auto it = node_flags.find(i);
  return it != node_flags.end() &&
         std::find(it->second.begin(), it->second.end(), f) != it->second.end();
}

bool ConsistencyReport::link_has(LinkId l, Flag f) const {
  auto it = link_flags.find(l);
  return it != link_flags.end() &&
         std::find(it->second.begin(), it->second.end(), f) != it->second.end();
}

std::map<Flag, int> ConsistencyReport::summary() const {
  std::map<Flag, int> out;
  for (const auto& [n, fs] : node_flags)
    for (Flag f : fs) out[f]++;
  for (const auto& [l, fs] : link_flags)
    for (Flag f : fs) out[f]++;
  return out;
}

std::string ConsistencyReport::flags_csv(LinkId l) const {
  auto it = link_flags.find(l);
  if (it == link_flags.end()) return "";
  std::string out;
  for (Flag f : it->second) {
    if (!out.empty()) out += '|';
    out += flag_name(f);
  }
  return out;
}

ConsistencyReport precheck(const StatTable& stats, const Topology& t) {
  ConsistencyReport rep;

  for (NodeId v : t.topo_order()) {
    if (t.is_source_root(v)) continue;
    const auto& srcs = stats.sources_at(v);
    if (srcs.empty()) continue;  // no simulated source reaches this node
    const double pooled = stats.confirmed_pooled(v);

    // zero-gamma circumstances, keyed by the node's parent links
    if (pooled == 0) {
      if (srcs.size() > 1) rep.add_node(v, Flag::MultiSourceZeroSum);
      for (LinkId in : t.in_links(v)) {
        switch (t.link_class(in)) {
          case LinkClass::SBRL:
          case LinkClass::RL:
          case LinkClass::AOL:
            rep.add_link(in, Flag::ZeroGammaSbrl);
            break;
          case LinkClass::SSNL:
            rep.add_link(in, Flag::ZeroGammaSsnl);
            break;
        }
      }
    } else {
      // one source sees nothing while another rescues the subtree
      for (SourceId s : srcs)
        if (stats.confirmed(v, s) == 0) {
          rep.add_per_source(v, s, srcs.size() > 1 ? Flag::ZeroGammaSsnl : Flag::ZeroGammaSbrl);
          rep.actions.push_back("node " + std::to_string(v) + ": source " + std::to_string(s) +
                                " observes nothing, kept alive via pooled counts");
        }
    }

    // partition circumstance: child observation sets partition the parent's
    const auto& children = t.children(v);
    if (children.size() >= 2 && pooled > 0) {
      double child_sum = 0;
      for (NodeId c : children) child_sum += stats.confirmed_over(c, srcs);
      if (child_sum == pooled) {
        rep.add_node(v, srcs.size() > 1 ? Flag::MultiSourcePartition : Flag::Partition);
        rep.actions.push_back("node " + std::to_string(v) +
                              ": pooled partition, polynomial skipped");
      } else {
        for (SourceId s : srcs) {
          double per = 0;
          for (NodeId c : children) per += stats.confirmed(c, s);
          if (stats.confirmed(v, s) > 0 && per == stats.confirmed(v, s)) {
            rep.add_per_source(v, s, Flag::Partition);
            rep.actions.push_back("node " + std::to_string(v) + ": source " +
                                  std::to_string(s) +
                                  " partitions, rescued by another source's probes");
          }
        }
      }
    }
  }
  return rep;
}

EstimationPlan apply(const ConsistencyReport& report, const StatTable& stats, const Topology& t) {
  EstimationPlan plan;

  // prune nodes with no observations at all; within one tree zero counts
  // propagate down by themselves, while an intersection stays alive as long
  // as any source still reaches its receivers
  for (NodeId v : t.topo_order()) {
    if (t.is_source_root(v)) continue;
    if (stats.sources_at(v).empty() || stats.confirmed_pooled(v) == 0) plan.pruned.insert(v);
  }

  for (NodeId v : t.topo_order()) {
    if (t.is_source_root(v)) {
      plan.nodes[v] = NodeDisposition::SourceRoot;
      continue;
    }
    if (plan.pruned.count(v)) {
      plan.nodes[v] = NodeDisposition::Unestimable;
      continue;
    }
    if (t.is_leaf(v)) {
      plan.nodes[v] = NodeDisposition::Leaf;
      continue;
    }
    std::vector<NodeId> informative;
    for (NodeId c : t.children(v))
      if (stats.confirmed_over(c, stats.sources_at(v)) > 0) informative.push_back(c);
    plan.informative_children[v] = informative;
    if (informative.size() <= 1) {
      plan.nodes[v] = NodeDisposition::Chain;
      continue;
    }
    if (report.node_has(v, Flag::Partition) || report.node_has(v, Flag::MultiSourcePartition)) {
      plan.nodes[v] = NodeDisposition::Unestimable;
      continue;
    }
    plan.nodes[v] = NodeDisposition::Solve;
  }
  return plan;
}

}  // namespace losstomo
