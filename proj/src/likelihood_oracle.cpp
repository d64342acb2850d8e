#include "losstomo/likelihood_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace losstomo {

namespace {

std::map<LinkId, std::size_t> link_positions(const Topology& t) {
  std::map<LinkId, std::size_t> pos;
  for (std::size_t i = 0; i < t.links().size(); ++i) pos[t.links()[i].id] = i;
  return pos;
}

void check_theta(const std::vector<double>& theta, const Topology& t) {
  if (theta.size() != t.links().size())
    throw InputError("theta dimension mismatch: expected " + std::to_string(t.links().size()));
  for (double th : theta)
    if (!(th > 0.0 && th < 1.0)) throw InputError("theta must be interior to (0,1)");
}

// beta per node, bottom up; beta = 1 at leaves
std::map<NodeId, double> beta_recursion(const std::vector<double>& theta,
                                        const std::map<LinkId, std::size_t>& pos,
                                        const Topology& t) {
  std::map<NodeId, double> beta;
  const auto& order = t.topo_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeId v = *it;
    if (t.is_leaf(v)) {
      beta[v] = 1.0;
      continue;
    }
    double prod = 1.0;
    for (LinkId lid : t.out_links(v)) {
      double p = 1.0 - theta[pos.at(lid)];
      prod *= 1.0 - p * beta.at(t.link(lid).child);
    }
    beta[v] = 1.0 - prod;
  }
  return beta;
}

}  // namespace

double loglik(const std::vector<double>& theta, const StatTable& stats, const Topology& t) {
  check_theta(theta, t);
  auto pos = link_positions(t);
  auto beta = beta_recursion(theta, pos, t);
  double sum = 0.0;
  for (const Link& l : t.links()) {
    double p = 1.0 - theta[pos.at(l.id)];
    double n1 = stats.link_confirmed_pooled(l.id);
    double n0 = stats.link_uncertain_pooled(l.id);
    if (n1 > 0) sum += n1 * std::log(p);
    if (n0 > 0) sum += n0 * std::log(1.0 - p * beta.at(l.child));
  }
  return sum;
}

std::vector<double> loglik_gradient(const std::vector<double>& theta, const StatTable& stats,
                                    const Topology& t) {
  check_theta(theta, t);
  auto pos = link_positions(t);
  auto beta = beta_recursion(theta, pos, t);

  std::vector<double> grad(theta.size(), 0.0);
  std::map<NodeId, double> wbeta;  // dL/dbeta_v, filled parents-first
  for (NodeId n : t.topo_order()) wbeta[n] = 0.0;

  for (NodeId u : t.topo_order()) {
    const auto& outs = t.out_links(u);
    if (outs.empty()) continue;
    std::vector<double> xi(outs.size());
    for (std::size_t j = 0; j < outs.size(); ++j) {
      double p = 1.0 - theta[pos.at(outs[j])];
      xi[j] = 1.0 - p * beta.at(t.link(outs[j]).child);
    }
    for (std::size_t j = 0; j < outs.size(); ++j) {
      LinkId lid = outs[j];
      NodeId v = t.link(lid).child;
      double p = 1.0 - theta[pos.at(lid)];
      double prod_others = 1.0;
      for (std::size_t k = 0; k < outs.size(); ++k)
        if (k != j) prod_others *= xi[k];
      double dLdxi = stats.link_uncertain_pooled(lid) / xi[j] - wbeta.at(u) * prod_others;
      double dLdp = stats.link_confirmed_pooled(lid) / p - dLdxi * beta.at(v);
      grad[pos.at(lid)] = -dLdp;  // d/d theta = -d/d p
      wbeta[v] += dLdxi * (-p);
    }
  }
  return grad;
}

double gradient_check(const std::vector<double>& theta, const StatTable& stats,
                      const Topology& t) {
  const double h = 1e-6;
  auto analytic = loglik_gradient(theta, stats, t);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> tp(theta), tm(theta);
    tp[i] = std::min(1.0 - 1e-12, theta[i] + h);
    tm[i] = std::max(1e-12, theta[i] - h);
    double fd = (loglik(tp, stats, t) - loglik(tm, stats, t)) / (tp[i] - tm[i]);
    double rel = std::abs(analytic[i] - fd) / std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---- maximization -----------------------------------------------------------

namespace {

// one parameter per identifiable segment
struct Param {
  std::vector<LinkId> links;
};

std::vector<Param> segment_params(const Topology& t) {
  std::vector<Param> params;
  std::set<LinkId> chained;
  for (const SerialChain& ch : serial_chains(t)) {
    params.push_back({ch.links});
    for (LinkId l : ch.links) chained.insert(l);
  }
  for (const Link& l : t.links())
    if (!chained.count(l.id)) params.push_back({{l.id}});
  std::sort(params.begin(), params.end(),
            [](const Param& a, const Param& b) { return a.links.front() < b.links.front(); });
  return params;
}

std::vector<double> expand(const std::vector<Param>& params, const std::vector<double>& v,
                           const Topology& t, const std::map<LinkId, std::size_t>& pos) {
  std::vector<double> theta(t.links().size(), 0.5);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double pass = 1.0 - v[i];
    double per_link = std::pow(pass, 1.0 / static_cast<double>(params[i].links.size()));
    for (LinkId l : params[i].links) theta[pos.at(l)] = 1.0 - per_link;
  }
  return theta;
}

// golden-section maximization of f on [lo, hi]
template <typename F>
double golden_max(F&& f, double lo, double hi, double xtol) {
  const double gr = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > xtol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

std::optional<double> OracleResult::segment_theta(LinkId l) const {
  auto it = theta.find(l);
  if (it != theta.end() && it->second) return it->second;
  for (const CompositeGroup& g : composites)
    if (std::find(g.links.begin(), g.links.end(), l) != g.links.end()) return g.theta;
  return std::nullopt;
}

OracleResult maximize(const StatTable& stats, const Topology& t,
                      std::optional<std::vector<double>> theta0, const OracleOptions& opts) {
  if (static_cast<int>(t.links().size()) > opts.max_links)
    throw InputError("oracle limited to " + std::to_string(opts.max_links) + " links");
  auto pos = link_positions(t);
  auto params = segment_params(t);
  const std::size_t np = params.size();

  auto objective = [&](const std::vector<double>& v) {
    return loglik(expand(params, v, t, pos), stats, t);
  };

  std::vector<std::vector<double>> starts;
  {
    std::vector<double> v0(np, 0.02);
    if (theta0) {
      check_theta(*theta0, t);
      for (std::size_t i = 0; i < np; ++i) {
        double pass = 1.0;
        for (LinkId l : params[i].links) pass *= 1.0 - (*theta0)[pos.at(l)];
        v0[i] = std::clamp(1.0 - pass, opts.lo, opts.hi);
      }
    }
    starts.push_back(v0);
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> u(0.002, 0.4);
    for (int s = 1; s < std::max(1, opts.starts); ++s) {
      std::vector<double> v(np);
      for (double& x : v) x = u(rng);
      starts.push_back(v);
    }
  }

  std::vector<double> best;
  double best_val = -std::numeric_limits<double>::infinity();
  int total_sweeps = 0;
  bool converged = true;
  for (auto& v : starts) {
    double cur = objective(v);
    int sweep = 0;
    for (; sweep < opts.max_sweeps; ++sweep) {
      double max_move = 0.0;
      for (std::size_t i = 0; i < np; ++i) {
        double old = v[i];
        double nv = golden_max(
            [&](double x) {
              v[i] = x;
              return objective(v);
            },
            opts.lo, opts.hi, 1e-13);
        v[i] = nv;
        max_move = std::max(max_move, std::abs(nv - old));
      }
      double val = objective(v);
      bool done = max_move < opts.step_tol ||
                  (val - cur < opts.tol * (1.0 + std::abs(val)) && max_move < 100 * opts.step_tol);
      cur = val;
      if (done) break;
    }
    total_sweeps += sweep;
    if (sweep >= opts.max_sweeps) converged = false;
    if (cur > best_val) {
      best_val = cur;
      best = v;
    }
  }

  OracleResult res;
  res.loglik = best_val;
  res.sweeps = total_sweeps;
  res.converged = converged;
  int gid = 0;
  for (std::size_t i = 0; i < np; ++i) {
    if (params[i].links.size() == 1) {
      res.theta[params[i].links[0]] = best[i];
    } else {
      CompositeGroup g;
      g.id = gid++;
      g.links = params[i].links;
      g.top = t.link(params[i].links.front()).parent;
      g.bottom = t.link(params[i].links.back()).child;
      g.theta = best[i];
      for (LinkId l : params[i].links) res.theta[l] = std::nullopt;
      res.composites.push_back(std::move(g));
    }
  }
  return res;
}

double stationarity_residual(const std::vector<double>& theta, const StatTable& stats,
                             const Topology& t) {
  check_theta(theta, t);
  if (t.sources().size() != 1)
    throw InputError("stationarity check is defined for single-source trees");
  const SourceId s = t.sources()[0].id;
  const double n = static_cast<double>(stats.probes_sent(s));
  auto pos = link_positions(t);
  auto beta = beta_recursion(theta, pos, t);

  // model pass rate of the path to each node
  std::map<NodeId, double> a;
  for (NodeId v : t.topo_order()) {
    if (t.is_source_root(v)) {
      a[v] = 1.0;
      continue;
    }
    LinkId in = t.in_links(v)[0];
    a[v] = a.at(t.link(in).parent) * (1.0 - theta[pos.at(in)]);
  }

  double worst = 0.0;
  for (const Link& l : t.links()) {
    double n1 = stats.link_confirmed(l.id, s);
    double n0 = stats.link_uncertain(l.id, s);
    // arrivals at the parent node: confirmed there plus imp (the share of the
    // uncertain probes that still reached it)
    double arrivals = t.is_source_root(l.parent) ? n : n * a.at(l.parent);
    double rhs;
    switch (t.link_class(l.id)) {
      case LinkClass::RL:
        rhs = 1.0 - (n1 / n) / beta.at(l.child);
        break;
      case LinkClass::SBRL:
      case LinkClass::SSNL:
        rhs = 1.0 - (n1 / arrivals) / beta.at(l.child);
        break;
      case LinkClass::AOL: {
        double imp = arrivals - (n1 + n0);  // uncertain above, estimated reached
        rhs = (n0 + imp) / arrivals;
        break;
      }
    }
    worst = std::max(worst, std::abs(theta[pos.at(l.id)] - rhs));
  }
  return worst;
}

}  // namespace losstomo
