#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "losstomo/estimator_path.hpp"
#include "losstomo/statistics.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// Exact link-based log-likelihood:
//   L(theta) = sum_l [ n_l(1) log(1-theta_l) + n_l(0) log xi_l ],
//   xi_l = theta_l + (1-theta_l)(1-beta_child), 1-beta_v = prod_out xi.
// theta is indexed by t.links() order. Requires interior theta.
double loglik(const std::vector<double>& theta, const StatTable& stats, const Topology& t);

// Analytic d L / d theta_l via the beta recursion (reverse pass).
std::vector<double> loglik_gradient(const std::vector<double>& theta, const StatTable& stats,
                                    const Topology& t);

// max relative difference between the analytic gradient and central finite
// differences (step 1e-6)
double gradient_check(const std::vector<double>& theta, const StatTable& stats,
                      const Topology& t);

struct OracleOptions {
  double tol = 1e-12;       // sweep improvement stop
  double step_tol = 1e-10;  // max per-coordinate move stop
  int max_sweeps = 4000;
  int starts = 1;           // extra random starts beyond theta0
  std::uint64_t seed = 1;
  int max_links = 16;       // refuse larger problems
  double lo = 1e-9, hi = 1.0 - 1e-9;
};

struct OracleResult {
  std::map<LinkId, std::optional<double>> theta;  // null inside multi-link chains
  std::vector<CompositeGroup> composites;         // one entry per serial chain
  double loglik = 0.0;
  int sweeps = 0;
  bool converged = true;
  // loss of the serial segment containing link l (the link's own estimate
  // when it is not part of a chain)
  std::optional<double> segment_theta(LinkId l) const;
};

// Brute-force maximization of the log-likelihood by coordinate ascent with
// golden-section line searches; serial chains are collapsed to one parameter
// each (the likelihood depends only on their pass product). The exponential
// family structure makes the maximizer unique, so any interior start works.
OracleResult maximize(const StatTable& stats, const Topology& t,
                      std::optional<std::vector<double>> theta0 = std::nullopt,
                      const OracleOptions& opts = {});

// Assembled stationarity equations of the four link classes at theta for
// single-source trees; imp is evaluated from the model arrival counts
// n^s A(s, parent). Returns max |theta_l - rhs_l|.
double stationarity_residual(const std::vector<double>& theta, const StatTable& stats,
                             const Topology& t);

}  // namespace losstomo
