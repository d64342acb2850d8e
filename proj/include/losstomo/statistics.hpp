#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "losstomo/probe_sim.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// The sufficient statistics of an observation set: per node/source confirmed
// passes n_i(s,1), per link uncertainty counts n_i(s,0), pooled aggregates,
// and joint (intersection) counts over child subsets for the virtual-link
// merge. Immutable after build apart from the joint-count memo.
class StatTable {
 public:
  StatTable() = default;

  // Reduces the observations (optionally a probe window [begin,end)) to
  // counts. Dimensions must match the topology.
  static StatTable build(const Topology& t, const ObservationSet& obs,
                         std::int64_t probe_begin = 0, std::int64_t probe_end = -1);

  // Builds a table from given (possibly non-integer) confirmed counts, e.g.
  // the expected counts at known model parameters. Joint counts keyed by
  // (node, source, sorted child subset).
  static StatTable from_counts(
      const Topology& t, const std::map<SourceId, std::int64_t>& probes,
      const std::map<std::pair<NodeId, SourceId>, double>& node_confirmed,
      const std::map<std::tuple<NodeId, SourceId, std::vector<NodeId>>, double>& joint = {});

  std::int64_t probes_sent(SourceId s) const;  // n^s
  std::int64_t probes_sent_total() const;

  // sources with data at node i (S(i) restricted to simulated sources)
  const std::set<SourceId>& sources_at(NodeId i) const;

  double confirmed(NodeId i, SourceId s) const;  // n_i(s,1)
  double confirmed_pooled(NodeId i) const;       // Σ_{s∈S(i)} n_i(s,1)
  // Σ over a caller-chosen source set; the path polynomial at node i pools
  // its children over S(i), which is smaller than S(child) at joint children
  double confirmed_over(NodeId i, const std::set<SourceId>& sources) const;

  double link_confirmed(LinkId l, SourceId s) const;  // n_l(s,1)
  double link_uncertain(LinkId l, SourceId s) const;  // n_l(s,0)
  double link_confirmed_pooled(LinkId l) const;       // n_l(1)
  double link_uncertain_pooled(LinkId l) const;       // n_l(0)
  const std::vector<SourceId>& link_source_list(LinkId l) const;

  // n_D(s,1): probes from s observed below every child in D simultaneously.
  // D holds child node ids of node i. Memoized; needs bitmaps or imported
  // joint counts.
  double joint_confirmed(NodeId i, SourceId s, const std::vector<NodeId>& D) const;
  double joint_confirmed_pooled(NodeId i, const std::vector<NodeId>& D) const;

  bool has_bitmaps() const { return has_bitmaps_; }
  bool has_node(NodeId i) const { return node_confirmed_.count(i) > 0; }
  const std::vector<SourceId>& source_ids() const { return source_ids_; }

  // CSV export/import. Joint counts are exported for all child subsets of
  // size >= 2 at nodes with at most max_joint_children children.
  std::string to_csv(const Topology& t, int max_joint_children = 6) const;
  static StatTable from_csv(const Topology& t, const std::string& csv_text);

 private:
  std::map<SourceId, std::int64_t> probes_;
  std::vector<SourceId> source_ids_;
  std::map<NodeId, std::map<SourceId, double>> node_confirmed_;
  std::map<NodeId, std::set<SourceId>> node_sources_;
  std::map<LinkId, std::map<SourceId, std::pair<double, double>>> link_counts_;
  std::map<LinkId, std::vector<SourceId>> link_sources_;

  bool has_bitmaps_ = false;
  std::map<SourceId, std::map<NodeId, BitVector>> node_bits_;
  std::map<SourceId, std::pair<std::int64_t, std::int64_t>> window_;
  mutable std::map<std::tuple<NodeId, SourceId, std::vector<NodeId>>, double> joint_memo_;

  void fill_link_rows(const Topology& t);
};

struct MergedCount {
  std::map<SourceId, double> per_source;  // n_z(s,1)
  double pooled = 0;                            // n_z(1)
};

// Theorem-5 virtual-link statistic: the number of probes observed below at
// least one child in D, via inclusion-exclusion over the joint counts.
MergedCount merge_children(const StatTable& stats, NodeId i, const std::vector<NodeId>& D);

void save_stats_csv(const StatTable& stats, const Topology& t, const std::string& path);
StatTable load_stats_csv(const Topology& t, const std::string& path);

}  // namespace losstomo
