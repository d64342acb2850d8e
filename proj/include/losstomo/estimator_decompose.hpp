#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "losstomo/estimator_path.hpp"
#include "losstomo/statistics.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// Tree-topology MLE polynomial solved in A-space:
//   1 - gamma_i/A = prod_j (1 - gamma_j/A)
// Bracketed bisection; the reference route for descendant/ancestor trees.
std::optional<double> minc_solve_node(double gamma_parent, std::span<const double> gamma_children,
                                      double tol = 1e-13);

struct TreeEstimate {
  int tree_id = 0;
  TreeGroup group = TreeGroup::Descendant;
  NodeId root = -1;
  std::optional<double> root_count;  // n^s or n*_root(1); null when unresolved
  std::map<LinkId, LinkEstimate> links;
  std::vector<CompositeGroup> composites;
  // pass rate of the path from the piece root to each piece node
  std::map<NodeId, double> relative_rate;
};

struct DecomposedEstimate {
  PathRateTable joint_rates;  // step 1: solved rates at the joint nodes
  std::vector<TreeEstimate> trees;
  LinkEstimateTable merged;  // per-link report over all of E
  ConsistencyReport report;
};

// Estimates one independent tree given the virtual probe count at its root.
// Joint-node leaves take their path rates from step 1 (their in-link is the
// one place the multi-source estimate enters). Everything the function reads
// lies inside the piece, which is what makes the decomposition valid.
TreeEstimate estimate_descendant_tree(const Topology& t, const DecomposedTree& piece,
                                      std::optional<double> n_star_root, const StatTable& stats,
                                      const PathRateTable& joint_rates,
                                      ConsistencyReport* report = nullptr);

// Bottom-up variant for ancestor-group trees (root count n^s). The known
// joint-leaf term enters each level's polynomial through the leaf's confirmed
// trace rate; solving proceeds level by level up to the source.
TreeEstimate estimate_ancestor_tree(const Topology& t, const DecomposedTree& piece,
                                    const StatTable& stats, const PathRateTable& joint_rates,
                                    ConsistencyReport* report = nullptr);

// decompose at joint nodes -> solve joint rates -> estimate descendant trees
// top down and ancestor trees bottom up -> merge per-link reports
DecomposedEstimate run_pipeline(const Topology& t, const StatTable& stats);

}  // namespace losstomo
