#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "losstomo/consistency.hpp"
#include "losstomo/statistics.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// ---- root machinery for the path likelihood polynomial --------------------
//
// Substituting x = 1 - beta into the path polynomial turns it into the fixed
// point x = prod_j((1-c_j) + c_j x) with c_j the child/parent count ratios.
// For c_j in (0,1) and sum c > 1 there is exactly one root in [0,1); x = 1 is
// always a root and never the estimate.

struct RootSolve {
  double x = 0.0;         // uncertainty fraction, 1 - beta
  double residual = 0.0;  // |x - prod(...)| at the root
  int iterations = 0;
};

// Unique root in [0,1), bracketed bisection plus safeguarded Newton. Returns
// nothing when sum(c) <= 1 (no interior root). An optional seed (e.g. the
// closed form after a binary merge) starts the refinement.
std::optional<RootSolve> solve_loss_fraction(std::span<const double> c, double tol = 1e-14,
                                             std::optional<double> seed = std::nullopt);

// closed form for two children: x = (1-c1)(1-c2) / (c1 c2)
double binary_loss_fraction(double c1, double c2);

double fixed_point_residual(std::span<const double> c, double x);

// ---- per-node solution -----------------------------------------------------

enum class SolveStatus { Ok, NoInteriorRoot, ZeroGamma, TooFewChildren };

struct PolySolution {
  SolveStatus status = SolveStatus::Ok;
  SourceId reference = -1;  // k
  double a = 1.0;           // A(k,i), clamped into (0,1]
  bool clamped = false;
  double beta = 1.0;   // consistent subtree pass rate
  double x = 0.0;      // 1 - beta before clamping
  double residual = 0.0;
  int iterations = 0;
  bool closed_form = false;  // binary closed form produced the value
  bool merged_seed = false;  // |d|>2 solve seeded via a Theorem-5 merge
};

struct SolveOptions {
  double tol = 1e-14;
  bool use_merge_seed = true;  // binary-merge closed form as Newton seed
};

// gamma_hat(i, s) = n_i(s,1) / n^s
double gamma_hat(const StatTable& stats, NodeId i, SourceId s);

// Solves the joint polynomial H(A(k,i), S(i)) at node i for reference source
// k. Two informative children solve in closed form; more first merge into a
// binary node for the seed and then refine the full-degree polynomial.
PolySolution solve_joint_polynomial(const StatTable& stats, const Topology& t, NodeId i,
                                    SourceId k, const SolveOptions& opts = {});

// A(s,i) = A(k,i) * gamma_i(s) / gamma_i(k); clamped results are flagged.
std::map<SourceId, double> propagate_sources(double a_ref, SourceId k, const StatTable& stats,
                                             NodeId i, std::vector<SourceId>* clamped = nullptr);

// n*_i(1) = A(k,i)/gamma_i(k) * sum_s n^s gamma_i(s)
double n_star(double a_ref, SourceId k, const StatTable& stats, NodeId i);

// beta_hat = gamma_i(s) / A(s,i); identical across sources by construction
double beta_hat(double a, double gamma);

// ---- tables ----------------------------------------------------------------

struct PathRateEntry {
  double gamma = 0.0;  // empirical
  double a = 0.0;      // solved pass rate A(s,i)
  bool clamped = false;
};

struct NodeEstimate {
  NodeDisposition disposition = NodeDisposition::Unestimable;
  std::map<SourceId, PathRateEntry> per_source;
  double beta = 1.0;
  double n_star = 0.0;
  double residual = 0.0;
  SourceId reference = -1;
  bool solved() const {
    return disposition == NodeDisposition::Solve || disposition == NodeDisposition::Leaf ||
           disposition == NodeDisposition::SourceRoot;
  }
};

struct PathRateTable {
  std::map<NodeId, NodeEstimate> nodes;
  const NodeEstimate* find(NodeId i) const {
    auto it = nodes.find(i);
    return it == nodes.end() ? nullptr : &it->second;
  }
};

struct CompositeGroup {
  int id = 0;
  NodeId top = -1;
  NodeId bottom = -1;
  std::vector<LinkId> links;
  std::optional<double> theta;  // loss of the whole serial segment
};

struct LinkEstimate {
  std::optional<double> theta;
  bool clamped = false;
  std::optional<int> composite;  // group id when part of a serial chain
};

struct LinkEstimateTable {
  std::map<LinkId, LinkEstimate> links;
  std::vector<CompositeGroup> composites;
};

// Link rates from path rates: 1-theta_l = sum_{s in M(l)} n^s A(s,child) /
// sum_{s in M(l)} n^s A(s,parent). Serial chains become composite groups.
LinkEstimateTable path_to_link(const PathRateTable& rates, const Topology& t,
                               const StatTable& stats, ConsistencyReport* report = nullptr);

struct PathEstimate {
  PathRateTable paths;
  LinkEstimateTable links;
  ConsistencyReport report;
};

// One node's estimate per its disposition: polynomial solve + Eq.-8 source
// propagation at branching nodes, gamma_hat at leaves. Shared between the
// direct estimator and the decomposition pipeline's joint-node step.
NodeEstimate solve_node_estimate(const Topology& t, const StatTable& stats, NodeId v,
                                 NodeDisposition disposition, ConsistencyReport* report);

// The full path-based pipeline: consistency pre-pass, per-node polynomials in
// topological order, source propagation, then link rates.
PathEstimate estimate_all_paths(const Topology& t, const StatTable& stats);

}  // namespace losstomo
