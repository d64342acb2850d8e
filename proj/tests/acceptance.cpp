// Acceptance suite: one test case per criterion, one pass/fail line each.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "doctest.h"
#include "losstomo/estimator_decompose.hpp"
#include "losstomo/estimator_path.hpp"
#include "losstomo/experiment.hpp"
#include "losstomo/fixtures.hpp"
#include "losstomo/likelihood_oracle.hpp"

using namespace losstomo;
using Clock = std::chrono::steady_clock;

namespace {

void verdict(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %2d] %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::map<SourceId, std::int64_t> counts_for(const Topology& t, std::int64_t n) {
  std::map<SourceId, std::int64_t> counts;
  for (const Source& s : t.sources()) counts[s.id] = n;
  return counts;
}

std::optional<double> segment_theta(const LinkEstimateTable& links, LinkId l) {
  auto it = links.links.find(l);
  if (it == links.links.end()) return std::nullopt;
  if (it->second.theta) return it->second.theta;
  if (it->second.composite)
    for (const CompositeGroup& g : links.composites)
      if (g.id == *it->second.composite) return g.theta;
  return std::nullopt;
}

}  // namespace

TEST_CASE("criterion 1: two-leaf closed form, exact value under a millisecond") {
  Topology t({0, 1, 2, 3}, {{1, 0, 1}, {2, 1, 2}, {3, 1, 3}}, {{0, 0}});
  StatTable st = StatTable::from_counts(t, {{0, 1000}},
                                        {{{1, 0}, 784.0}, {{2, 0}, 720.0}, {{3, 0}, 640.0}});
  PolySolution warmup = solve_joint_polynomial(st, t, 1, 0);
  auto t0 = Clock::now();
  PolySolution sol = solve_joint_polynomial(st, t, 1, 0);
  double elapsed = ms_since(t0);
  bool pass = sol.status == SolveStatus::Ok && sol.a == 0.8 && warmup.a == 0.8 && elapsed < 1.0;
  std::ostringstream d;
  d << "A = " << sol.a << " (exactly 0.8), solve took " << elapsed << " ms";
  verdict(1, pass, d.str());
  CHECK(sol.a == 0.8);
  CHECK(elapsed < 1.0);
}

TEST_CASE("criterion 2: root uniqueness and residual over 1e4 instances") {
  auto t0 = Clock::now();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uc(0.05, 0.999);
  std::uniform_real_distribution<double> ua(0.5, 0.999);
  int solved = 0, unique_roots = 0, rejected = 0, bad_residual = 0, out_of_range = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    int k = 2 + static_cast<int>(rng() % 5);
    std::vector<double> c(k);
    double sum = 0;
    for (double& cj : c) {
      cj = uc(rng);
      sum += cj;
    }
    if (sum <= 1.0) {
      if (!solve_loss_fraction(c)) rejected++;  // Lemma-1: no interior root
      continue;
    }
    auto root = solve_loss_fraction(c);
    if (!root) continue;
    solved++;
    if (root->residual < 1e-12) {
    } else {
      bad_residual++;
    }
    // model-consistent instance: gamma = A_true * beta, root must land at
    // A_true inside (gamma, 1]
    double a_true = ua(rng);
    double gamma = a_true * (1.0 - root->x);
    double a_est = gamma / (1.0 - root->x);
    if (!(a_est > gamma && a_est <= 1.0)) out_of_range++;
    // coarse scan for a second sign change
    auto h = [&](double x) {
      double p = 1;
      for (double cj : c) p *= (1 - cj) + cj * x;
      return x - p;
    };
    int changes = 0;
    double prev = h(0.0);
    for (int i = 1; i < 2000; ++i) {
      double cur = h(static_cast<double>(i) / 2000.0);
      if ((prev < 0) != (cur < 0)) changes++;
      prev = cur;
    }
    if (changes == 1) unique_roots++;
  }
  double elapsed = ms_since(t0);
  bool pass = solved > 8000 && unique_roots == solved && bad_residual == 0 &&
              out_of_range == 0 && elapsed < 5000.0;
  std::ostringstream d;
  d << solved << " solvable instances, all unique with residual < 1e-12, " << rejected
    << " sub-threshold instances rejected, " << elapsed << " ms";
  verdict(2, pass, d.str());
  CHECK(unique_roots == solved);
  CHECK(bad_residual == 0);
  CHECK(out_of_range == 0);
  CHECK(elapsed < 5000.0);
}

TEST_CASE("criterion 3: oracle equivalence on 50 random topologies") {
  auto t0 = Clock::now();
  double worst = 0.0;
  int compared = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    RandomNet net = random_identifiable_net(seed, 12, 1 + static_cast<int>(seed % 2), 0.02, 0.2);
    ObservationSet obs =
        simulate(net.topology, net.loss, counts_for(net.topology, 10000), seed * 31);
    StatTable st = StatTable::build(net.topology, obs);
    PathEstimate pe = estimate_all_paths(net.topology, st);
    OracleResult orc = maximize(st, net.topology);
    for (const Link& l : net.topology.links()) {
      auto a = pe.links.links.at(l.id).theta;
      auto b = orc.theta.at(l.id);
      if (!a || !b) continue;
      worst = std::max(worst, std::abs(*a - *b));
      compared++;
    }
  }
  double elapsed = ms_since(t0);
  bool pass = worst < 1e-4 && compared > 300 && elapsed < 120000.0;
  std::ostringstream d;
  d << "max |theta_path - theta_oracle| = " << worst << " over " << compared << " links, "
    << elapsed << " ms";
  verdict(3, pass, d.str());
  CHECK(worst < 1e-4);
  CHECK(elapsed < 120000.0);
}

TEST_CASE("criterion 4: tree reduction equals the MINC route per node") {
  double worst = 0.0;
  int compared = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    RandomNet net = random_identifiable_net(seed + 100, 12, 1, 0.02, 0.25);
    ObservationSet obs =
        simulate(net.topology, net.loss, counts_for(net.topology, 5000), seed * 13);
    StatTable st = StatTable::build(net.topology, obs);
    SourceId s = net.topology.sources()[0].id;
    double n = static_cast<double>(st.probes_sent(s));
    for (NodeId v : net.topology.topo_order()) {
      if (net.topology.is_source_root(v) || net.topology.is_leaf(v)) continue;
      std::vector<double> gammas;
      for (NodeId c : net.topology.children(v)) {
        double nc = st.confirmed(c, s);
        if (nc > 0) gammas.push_back(nc / n);
      }
      if (gammas.size() < 2 || st.confirmed(v, s) <= 0) continue;
      PolySolution general = solve_joint_polynomial(st, net.topology, v, s);
      auto minc = minc_solve_node(st.confirmed(v, s) / n, gammas);
      if (general.status != SolveStatus::Ok || !minc) continue;
      worst = std::max(worst, std::abs(general.a - std::min(1.0, *minc)));
      compared++;
    }
  }
  bool pass = worst < 1e-9 && compared > 50;
  std::ostringstream d;
  d << "max |A_general - A_minc| = " << worst << " over " << compared << " nodes";
  verdict(4, pass, d.str());
  CHECK(worst < 1e-9);
}

TEST_CASE("criterion 5: merge invariance for fanout 3..5") {
  // model-consistent statistics: the binary-merged closed form agrees with
  // the direct full-degree root
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(0.02, 0.3);
  double worst = 0.0;
  int compared = 0;
  for (int fanout = 3; fanout <= 5; ++fanout) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<NodeId> nodes = {0, 1};
      std::vector<Link> links = {{1, 0, 1}};
      for (int c = 0; c < fanout; ++c) {
        nodes.push_back(10 + c);
        links.push_back({2 + c, 1, 10 + c});
      }
      Topology t(nodes, links, {{0, 0}});
      LossModel loss;
      for (const Link& l : t.links()) loss.overrides[l.id] = th(rng);
      StatTable st = expected_stats(t, loss, {{0, 1000000}});

      SolveOptions direct;
      direct.use_merge_seed = false;
      PolySolution full = solve_joint_polynomial(st, t, 1, 0, direct);
      if (full.status != SolveStatus::Ok) continue;

      double pooled = st.confirmed_pooled(1);
      const auto& ch = t.children(1);
      double best = -1, ca = 0, cb = 0;
      for (std::uint32_t mask = 1; mask < (1u << (ch.size() - 1)); ++mask) {
        std::vector<NodeId> g1, g2;
        for (std::size_t b = 0; b < ch.size(); ++b)
          ((mask >> b) & 1u ? g1 : g2).push_back(ch[b]);
        double u1 = merge_children(st, 1, g1).pooled;
        double u2 = merge_children(st, 1, g2).pooled;
        if (u1 + u2 - pooled > best) {
          best = u1 + u2 - pooled;
          ca = u1 / pooled;
          cb = u2 / pooled;
        }
      }
      double merged_a = gamma_hat(st, 1, 0) / (1.0 - binary_loss_fraction(ca, cb));
      worst = std::max(worst, std::abs(full.a - merged_a));
      compared++;
    }
  }
  bool pass = worst < 1e-9 && compared == 60;
  std::ostringstream d;
  d << "max |A_direct - A_merged| = " << worst << " over " << compared << " nodes";
  verdict(5, pass, d.str());
  CHECK(worst < 1e-9);
  CHECK(compared == 60);
}

TEST_CASE("criterion 6: decomposition pipeline equals direct path estimation") {
  double worst = 0.0;
  int compared = 0;
  auto compare = [&](const Topology& t, const LossModel& loss, std::int64_t n,
                     std::uint64_t seed) {
    ObservationSet obs = simulate(t, loss, counts_for(t, n), seed);
    StatTable st = StatTable::build(t, obs);
    PathEstimate direct = estimate_all_paths(t, st);
    DecomposedEstimate piped = run_pipeline(t, st);
    for (const Link& l : t.links()) {
      auto a = segment_theta(direct.links, l.id);
      auto b = segment_theta(piped.merged, l.id);
      if (!a || !b) continue;
      worst = std::max(worst, std::abs(*a - *b));
      compared++;
    }
  };
  LossModel f2loss;
  f2loss.default_theta = 0.06;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) compare(fixture_f2(), f2loss, 6000, seed);
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    compare(fixture_f3(), f3_loss(), 5000, seed * 7);
  bool pass = worst < 1e-9 && compared > 200;
  std::ostringstream d;
  d << "max |theta_pipeline - theta_direct| = " << worst << " over " << compared
    << " identifiable links";
  verdict(6, pass, d.str());
  CHECK(worst < 1e-9);
}

TEST_CASE("criterion 7: F3 qualitative reproduction") {
  auto t0 = Clock::now();
  ExperimentConfig c = default_f3_config();
  c.group_sizes = {200, 400, 600, 800, 1000, 2000};
  c.replications = 40;
  c.seed_base = 1;
  Topology t = resolve_topology(c.topology_ref);
  RelativeErrorReport rep = run_experiment(c, t);

  std::vector<LinkId> inter = f3_intersection_links();
  auto group_median = [&](bool intersection, std::int64_t g) {
    std::vector<double> vals;
    for (const auto& [lid, per_group] : rep.medians) {
      bool is_inter =
          std::find(inter.begin(), inter.end(), lid) != inter.end();
      if (is_inter == intersection && per_group.count(g)) vals.push_back(per_group.at(g));
    }
    std::sort(vals.begin(), vals.end());
    return vals.empty() ? 0.0
                        : (vals.size() % 2 ? vals[vals.size() / 2]
                                           : 0.5 * (vals[vals.size() / 2 - 1] +
                                                    vals[vals.size() / 2]));
  };

  double worst_inter_1000 = 0.0, worst_inter_2000 = 0.0;
  for (LinkId lid : inter) {
    worst_inter_1000 = std::max(worst_inter_1000, rep.medians.at(lid).at(1000));
    worst_inter_2000 = std::max(worst_inter_2000, rep.medians.at(lid).at(2000));
  }
  bool below15 = worst_inter_1000 < 0.15;
  bool below10 = worst_inter_2000 < 0.10;

  bool group_ordering = true;
  for (std::int64_t g : c.group_sizes)
    if (group_median(true, g) > group_median(false, g)) group_ordering = false;

  // medians of the intersection links are non-increasing across the sweep
  bool monotone = true;
  for (LinkId lid : inter) {
    const std::vector<std::int64_t> sweep = {200, 400, 600, 800, 1000};
    for (std::size_t i = 1; i < sweep.size(); ++i)
      if (rep.medians.at(lid).at(sweep[i]) > rep.medians.at(lid).at(sweep[i - 1]))
        monotone = false;
  }

  double elapsed = ms_since(t0);
  bool pass = below15 && below10 && group_ordering && monotone && elapsed < 300000.0;
  std::ostringstream d;
  d << "intersection medians: " << worst_inter_1000 << " @1000 (<0.15), " << worst_inter_2000
    << " @2000 (<0.10); group ordering " << (group_ordering ? "holds" : "violated")
    << "; per-link monotone " << (monotone ? "holds" : "violated") << "; " << elapsed << " ms";
  verdict(7, pass, d.str());
  CHECK(below15);
  CHECK(below10);
  CHECK(group_ordering);
  CHECK(monotone);
  CHECK(elapsed < 300000.0);
}

TEST_CASE("criterion 8: unbiasedness and variance scaling on F1") {
  Topology f1 = fixture_f1();
  LossModel loss;
  loss.overrides[1] = 0.05;
  loss.overrides[2] = 0.1;
  loss.overrides[3] = 0.15;
  const double a_true = 0.95;  // pass rate of the path to node 1

  auto replicate = [&](std::int64_t n, int reps, std::uint64_t base) {
    std::vector<double> estimates;
    for (int r = 0; r < reps; ++r) {
      ObservationSet obs = simulate(f1, loss, counts_for(f1, n), base + r);
      StatTable st = StatTable::build(f1, obs);
      PathEstimate pe = estimate_all_paths(f1, st);
      estimates.push_back(pe.paths.nodes.at(1).per_source.at(0).a);
    }
    return estimates;
  };

  std::vector<double> at1000 = replicate(1000, 1000, 10000);
  double mean = 0;
  for (double a : at1000) mean += a;
  mean /= at1000.size();
  double var1000 = 0;
  for (double a : at1000) var1000 += (a - mean) * (a - mean);
  var1000 /= (at1000.size() - 1);
  double se = std::sqrt(var1000 / at1000.size());
  bool unbiased = std::abs(mean - a_true) < 3 * se;

  auto variance = [](const std::vector<double>& v) {
    double m = 0;
    for (double a : v) m += a;
    m /= v.size();
    double s = 0;
    for (double a : v) s += (a - m) * (a - m);
    return s / (v.size() - 1);
  };
  double var400 = variance(replicate(400, 1000, 50000));
  double var1600 = variance(replicate(1600, 1000, 90000));
  double ratio = var400 / var1600;
  bool scaling = ratio >= 2.8 && ratio <= 5.2;

  bool pass = unbiased && scaling;
  std::ostringstream d;
  d << "mean(A_hat) = " << mean << " vs " << a_true << " (|bias| " << std::abs(mean - a_true)
    << " < 3 SE = " << 3 * se << "); var(400)/var(1600) = " << ratio << " in [2.8, 5.2]";
  verdict(8, pass, d.str());
  CHECK(unbiased);
  CHECK(scaling);
}

TEST_CASE("criterion 9: analytic gradient vs central differences") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.03, 0.5);
  double worst = 0.0;
  for (std::uint64_t f = 1; f <= 5; ++f) {
    RandomNet net = random_identifiable_net(f + 300, 10, 1 + static_cast<int>(f % 2), 0.02, 0.2);
    ObservationSet obs = simulate(net.topology, net.loss, counts_for(net.topology, 3000), f * 3);
    StatTable st = StatTable::build(net.topology, obs);
    for (int p = 0; p < 20; ++p) {
      std::vector<double> theta(net.topology.links().size());
      for (double& x : theta) x = u(rng);
      worst = std::max(worst, gradient_check(theta, st, net.topology));
    }
  }
  bool pass = worst < 1e-5;
  std::ostringstream d;
  d << "max relative gradient error = " << worst << " over 100 points";
  verdict(9, pass, d.str());
  CHECK(worst < 1e-5);
}

TEST_CASE("criterion 10: experiment determinism") {
  ExperimentConfig c = default_f3_config();
  c.group_sizes = {200, 600};
  c.replications = 8;
  c.threads = 4;
  Topology t = resolve_topology(c.topology_ref);

  auto render = [&](const RelativeErrorReport& rep) {
    std::ostringstream cells, medians, curves;
    write_relerr_cells_csv(cells, rep);
    write_relerr_medians_csv(medians, rep, t);
    write_relerr_curves_dat(curves, rep);
    return cells.str() + medians.str() + curves.str();
  };
  std::string run1 = render(run_experiment(c, t));
  c.threads = 1;
  std::string run2 = render(run_experiment(c, t));
  bool pass = run1 == run2 && !run1.empty();
  std::ostringstream d;
  d << "two runs rendered " << run1.size() << " bytes, byte-identical: "
    << (pass ? "yes" : "no");
  verdict(10, pass, d.str());
  CHECK(run1 == run2);
}
