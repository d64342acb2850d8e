#include "losstomo/estimator_path.hpp"

#include <algorithm>
#include <cmath>

namespace losstomo {

namespace {

double product_term(std::span<const double> c, double x) {
  double p = 1.0;
  for (double cj : c) p *= (1.0 - cj) + cj * x;
  return p;
}

double h_value(std::span<const double> c, double x) { return x - product_term(c, x); }

double h_derivative(std::span<const double> c, double x) {
  double p = product_term(c, x);
  double s = 0.0;
  for (double cj : c) {
    double denom = (1.0 - cj) + cj * x;
    if (denom <= 0.0) return 1.0;  // only possible at x=0 with c=1; handled earlier
    s += cj / denom;
  }
  return 1.0 - p * s;
}

}  // namespace

double fixed_point_residual(std::span<const double> c, double x) {
  return std::abs(h_value(c, x));
}

double binary_loss_fraction(double c1, double c2) {
  return ((1.0 - c1) * (1.0 - c2)) / (c1 * c2);
}

std::optional<RootSolve> solve_loss_fraction(std::span<const double> c, double tol,
                                             std::optional<double> seed) {
  double sum = 0.0;
  for (double cj : c) {
    if (!(cj >= 0.0 && cj <= 1.0)) throw InputError("child ratio outside [0,1]");
    sum += cj;
  }
  if (sum <= 1.0) return std::nullopt;  // Lemma-1: no interior root

  if (product_term(c, 0.0) == 0.0) return RootSolve{0.0, 0.0, 0};  // some c_j == 1

  // bracket [lo, hi] with h(lo) < 0 < h(hi); h(1) = 0 and h'(1) = 1 - sum < 0
  double lo = 0.0;
  double hi = 0.0;
  bool bracketed = false;
  for (double eps = 1e-3; eps >= 1e-13; eps *= 1e-2) {
    hi = 1.0 - eps;
    if (h_value(c, hi) > 0.0) {
      bracketed = true;
      break;
    }
    lo = std::max(lo, 0.0);
  }
  if (!bracketed) return std::nullopt;  // root indistinguishable from 1

  double x = (seed && *seed > lo && *seed < hi) ? *seed : 0.5 * (lo + hi);
  int iters = 0;
  for (; iters < 200; ++iters) {
    double h = h_value(c, x);
    if (h < 0.0)
      lo = x;
    else
      hi = x;
    if (std::abs(h) <= tol || hi - lo <= 1e-17) break;
    double d = h_derivative(c, x);
    double xn = d != 0.0 ? x - h / d : x;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);  // safeguard
    x = xn;
  }
  return RootSolve{x, fixed_point_residual(c, x), iters};
}

double gamma_hat(const StatTable& stats, NodeId i, SourceId s) {
  std::int64_t n = stats.probes_sent(s);
  if (n <= 0) throw InputError("no probes sent by source " + std::to_string(s));
  return static_cast<double>(stats.confirmed(i, s)) / static_cast<double>(n);
}

PolySolution solve_joint_polynomial(const StatTable& stats, const Topology& t, NodeId i,
                                    SourceId k, const SolveOptions& opts) {
  PolySolution sol;
  sol.reference = k;
  const double nk1 = stats.confirmed(i, k);
  if (nk1 == 0) {
    sol.status = SolveStatus::ZeroGamma;
    return sol;
  }
  const double gamma_k = gamma_hat(stats, i, k);
  const auto& pool_sources = stats.sources_at(i);
  const double pooled = stats.confirmed_pooled(i);

  // child counts pooled over S(i): a joint child belongs to more trees, but
  // only this node's sources enter its factor of the polynomial
  std::vector<NodeId> informative;
  std::vector<double> counts;
  for (NodeId c : t.children(i)) {
    double nc = stats.confirmed_over(c, pool_sources);
    if (nc > 0) {
      informative.push_back(c);
      counts.push_back(nc);
    }
  }
  if (informative.size() < 2) {
    sol.status = SolveStatus::TooFewChildren;
    return sol;
  }

  if (informative.size() == 2) {
    // binary closed form, kept as one rational expression of the counts
    const double n1 = counts[0];
    const double n2 = counts[1];
    const double ni = pooled;
    const double overlap = n1 + n2 - ni;  // pairwise union overlap
    if (overlap <= 0.0) {
      sol.status = SolveStatus::NoInteriorRoot;
      return sol;
    }
    sol.a = (nk1 * n1 * n2) / (static_cast<double>(stats.probes_sent(k)) * ni * overlap);
    sol.beta = ni * overlap / (n1 * n2);
    sol.x = 1.0 - sol.beta;
    sol.closed_form = true;
    const double c[2] = {n1 / ni, n2 / ni};
    sol.residual = fixed_point_residual(c, sol.x);
  } else {
    std::vector<double> c(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) c[j] = counts[j] / pooled;

    std::optional<double> seed;
    if (opts.use_merge_seed && stats.has_bitmaps()) {
      // Theorem-5 merge into two virtual children; the split that maximizes
      // the cross-group joint count avoids the partition problem
      double best_overlap = -1;
      double ca = 0, cb = 0;
      const std::uint32_t half = 1u << (informative.size() - 1);
      for (std::uint32_t mask = 1; mask < half; ++mask) {
        std::vector<NodeId> d1, d2;
        for (std::size_t b = 0; b < informative.size(); ++b)
          ((mask >> b) & 1u ? d1 : d2).push_back(informative[b]);
        double u1 = merge_children(stats, i, d1).pooled;
        double u2 = merge_children(stats, i, d2).pooled;
        double overlap = u1 + u2 - pooled;
        if (overlap > best_overlap) {
          best_overlap = overlap;
          ca = u1 / pooled;
          cb = u2 / pooled;
        }
      }
      if (best_overlap > 0) {
        seed = binary_loss_fraction(ca, cb);
        sol.merged_seed = true;
      }
    }

    auto root = solve_loss_fraction(c, opts.tol, seed);
    if (!root) {
      sol.status = SolveStatus::NoInteriorRoot;
      return sol;
    }
    sol.x = root->x;
    sol.beta = 1.0 - root->x;
    sol.residual = root->residual;
    sol.iterations = root->iterations;
    sol.a = gamma_k / sol.beta;
  }

  if (sol.a > 1.0) {
    sol.a = 1.0;
    sol.clamped = true;
    sol.beta = gamma_k;  // keep A*beta = gamma consistent after the clamp
    sol.x = 1.0 - sol.beta;
  }
  return sol;
}

std::map<SourceId, double> propagate_sources(double a_ref, SourceId k, const StatTable& stats,
                                             NodeId i, std::vector<SourceId>* clamped) {
  std::map<SourceId, double> out;
  const double gamma_k = gamma_hat(stats, i, k);
  if (gamma_k <= 0.0) throw InputError("propagate_sources needs gamma_i(k) > 0");
  for (SourceId s : stats.sources_at(i)) {
    double a = a_ref * gamma_hat(stats, i, s) / gamma_k;
    if (a > 1.0) {
      a = 1.0;
      if (clamped) clamped->push_back(s);
    }
    out[s] = a;
  }
  return out;
}

double n_star(double a_ref, SourceId k, const StatTable& stats, NodeId i) {
  const double gamma_k = gamma_hat(stats, i, k);
  if (gamma_k <= 0.0) throw InputError("n_star needs gamma_i(k) > 0");
  double sum = 0.0;
  for (SourceId s : stats.sources_at(i))
    sum += static_cast<double>(stats.probes_sent(s)) * gamma_hat(stats, i, s);
  return a_ref / gamma_k * sum;
}

double beta_hat(double a, double gamma) {
  if (a <= 0.0) throw InputError("beta_hat needs A > 0");
  return gamma / a;
}

// ---- full pipeline ---------------------------------------------------------

namespace {

// weighted path-rate sum over a source set: sum_s n^s A(s, i)
std::optional<double> weighted_rate(const PathRateTable& rates, const StatTable& stats,
                                    const Topology& t, NodeId node,
                                    const std::vector<SourceId>& sources) {
  if (t.is_source_root(node)) {
    double sum = 0.0;
    for (SourceId s : sources) sum += static_cast<double>(stats.probes_sent(s));
    return sum;
  }
  const NodeEstimate* ne = rates.find(node);
  if (!ne || !ne->solved()) return std::nullopt;
  double sum = 0.0;
  for (SourceId s : sources) {
    auto it = ne->per_source.find(s);
    if (it == ne->per_source.end()) return std::nullopt;
    sum += static_cast<double>(stats.probes_sent(s)) * it->second.a;
  }
  return sum;
}

}  // namespace

LinkEstimateTable path_to_link(const PathRateTable& rates, const Topology& t,
                               const StatTable& stats, ConsistencyReport* report) {
  LinkEstimateTable out;
  std::map<LinkId, const SerialChain*> chain_of;
  std::vector<SerialChain> chains = serial_chains(t);
  for (const SerialChain& ch : chains)
    for (LinkId l : ch.links) chain_of[l] = &ch;

  // composite groups first
  int next_group = 0;
  std::map<const SerialChain*, int> group_of;
  for (const SerialChain& ch : chains) {
    CompositeGroup g;
    g.id = next_group++;
    g.top = ch.top;
    g.bottom = ch.bottom;
    g.links = ch.links;
    const std::vector<SourceId>& members = t.link_sources(ch.links.front());
    auto num = weighted_rate(rates, stats, t, ch.bottom, members);
    auto den = weighted_rate(rates, stats, t, ch.top, members);
    if (num && den && *den > 0.0) {
      double pass = *num / *den;
      bool clamp = pass > 1.0;
      g.theta = 1.0 - std::min(1.0, pass);
      if (clamp && report) {
        for (LinkId l : ch.links) report->add_link(l, Flag::InfeasibleRate);
      }
    }
    group_of[&ch] = g.id;
    out.composites.push_back(std::move(g));
  }

  for (const Link& l : t.links()) {
    LinkEstimate est;
    auto cit = chain_of.find(l.id);
    if (cit != chain_of.end()) {
      est.composite = group_of[cit->second];
      out.links[l.id] = est;
      continue;
    }
    const std::vector<SourceId>& members = t.link_sources(l.id);
    auto num = weighted_rate(rates, stats, t, l.child, members);
    auto den = weighted_rate(rates, stats, t, l.parent, members);
    if (num && den && *den > 0.0) {
      double pass = *num / *den;
      if (pass > 1.0) {
        pass = 1.0;
        est.clamped = true;
        if (report) report->add_link(l.id, Flag::InfeasibleRate);
      }
      est.theta = 1.0 - pass;
    }
    out.links[l.id] = est;
  }
  return out;
}

NodeEstimate solve_node_estimate(const Topology& t, const StatTable& stats, NodeId v,
                                 NodeDisposition disposition, ConsistencyReport* report) {
  NodeEstimate ne;
  ne.disposition = disposition;
  switch (disposition) {
    case NodeDisposition::SourceRoot: {
      for (const Source& src : t.sources())
        if (src.root == v) {
          ne.per_source[src.id] = {1.0, 1.0, false};
          const auto& ids = stats.source_ids();
          if (std::binary_search(ids.begin(), ids.end(), src.id))
            ne.n_star = static_cast<double>(stats.probes_sent(src.id));
        }
      break;
    }
    case NodeDisposition::Leaf: {
      for (SourceId s : stats.sources_at(v)) {
        double g = gamma_hat(stats, v, s);
        ne.per_source[s] = {g, g, false};
      }
      ne.beta = 1.0;
      ne.n_star = stats.confirmed_pooled(v);
      break;
    }
    case NodeDisposition::Solve: {
      // reference source: the one with the most confirmed probes
      SourceId k = -1;
      double best = -1;
      for (SourceId s : stats.sources_at(v))
        if (stats.confirmed(v, s) > best) {
          best = stats.confirmed(v, s);
          k = s;
        }
      PolySolution sol = solve_joint_polynomial(stats, t, v, k);
      if (sol.status != SolveStatus::Ok) {
        ne.disposition = NodeDisposition::Unestimable;
        if (sol.status == SolveStatus::NoInteriorRoot && report)
          report->add_node(
              v, stats.sources_at(v).size() > 1 ? Flag::MultiSourcePartition : Flag::Partition);
        break;
      }
      ne.reference = k;
      ne.residual = sol.residual;
      ne.beta = sol.beta;
      if (sol.clamped && report) report->add_node(v, Flag::InfeasibleRate);
      std::vector<SourceId> clamped;
      auto rates = propagate_sources(sol.a, k, stats, v, &clamped);
      if (report)
        for (SourceId s : clamped) report->add_per_source(v, s, Flag::InfeasibleRate);
      for (auto& [s, a] : rates) {
        ne.per_source[s] = {gamma_hat(stats, v, s), a,
                            std::find(clamped.begin(), clamped.end(), s) != clamped.end()};
      }
      ne.n_star = n_star(sol.a, k, stats, v);
      break;
    }
    case NodeDisposition::Chain:
    case NodeDisposition::Unestimable:
      for (SourceId s : stats.sources_at(v))
        ne.per_source[s] = {stats.probes_sent(s) > 0 ? gamma_hat(stats, v, s) : 0.0, 0.0, false};
      break;
  }
  return ne;
}

PathEstimate estimate_all_paths(const Topology& t, const StatTable& stats) {
  PathEstimate result;
  result.report = precheck(stats, t);
  EstimationPlan plan = apply(result.report, stats, t);

  for (NodeId v : t.topo_order())
    result.paths.nodes[v] = solve_node_estimate(t, stats, v, plan.nodes.at(v), &result.report);

  result.links = path_to_link(result.paths, t, stats, &result.report);
  return result;
}

}  // namespace losstomo
