#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "losstomo/estimator_path.hpp"
#include "losstomo/fixtures.hpp"

using namespace losstomo;

namespace {

// star topology: source 0 -> node 1 -> fanout leaves 10, 11, ...
Topology star(int fanout) {
  std::vector<NodeId> nodes = {0, 1};
  std::vector<Link> links = {{1, 0, 1}};
  for (int c = 0; c < fanout; ++c) {
    nodes.push_back(10 + c);
    links.push_back({2 + c, 1, 10 + c});
  }
  return Topology(nodes, links, {{0, 0}});
}

// exactly one sign change of h(x) = x - prod((1-c)+cx) on a fine grid
int grid_sign_changes(const std::vector<double>& c, double* root_lo) {
  auto h = [&](double x) {
    double p = 1;
    for (double cj : c) p *= (1 - cj) + cj * x;
    return x - p;
  };
  const int grid = 200000;
  int changes = 0;
  double prev = h(0.0);
  for (int i = 1; i < grid; ++i) {
    double x = static_cast<double>(i) / grid;  // stays below 1
    double cur = h(x);
    if ((prev < 0) != (cur < 0)) {
      changes++;
      if (root_lo) *root_lo = x;
    }
    prev = cur;
  }
  return changes;
}

}  // namespace

TEST_CASE("closed form for two equal children") {
  // c1 = c2 = 0.9, gamma = 0.72: A = 0.72 * 0.81 / 0.8 = 0.729
  Topology t = star(2);
  StatTable st = StatTable::from_counts(t, {{0, 1000}},
                                        {{{1, 0}, 720.0}, {{10, 0}, 648.0}, {{11, 0}, 648.0}});
  PolySolution sol = solve_joint_polynomial(st, t, 1, 0);
  REQUIRE(sol.status == SolveStatus::Ok);
  CHECK(sol.closed_form);
  CHECK(sol.a == doctest::Approx(0.729).epsilon(1e-14));
  CHECK(sol.residual < 1e-12);
}

TEST_CASE("lossless subtree gives A = gamma") {
  // c1 = c2 = 1
  Topology t = star(2);
  StatTable st = StatTable::from_counts(t, {{0, 1000}},
                                        {{{1, 0}, 720.0}, {{10, 0}, 720.0}, {{11, 0}, 720.0}});
  PolySolution sol = solve_joint_polynomial(st, t, 1, 0);
  REQUIRE(sol.status == SolveStatus::Ok);
  CHECK(sol.a == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(sol.beta == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("lemma fixed point, c = {0.9, 0.9}") {
  // x = (0.1 + 0.9 x)^2 has the interior root 1/81
  std::vector<double> c = {0.9, 0.9};
  auto root = solve_loss_fraction(c);
  REQUIRE(root);
  CHECK(root->x == doctest::Approx(1.0 / 81.0).epsilon(1e-12));
  CHECK(root->residual < 1e-12);
}

TEST_CASE("two-leaf closed form returns 0.8 exactly") {
  // n = 1000, n1 = 720, n2 = 640, n12 = 576 (union 784)
  Topology t = star(2);
  StatTable st = StatTable::from_counts(t, {{0, 1000}},
                                        {{{1, 0}, 784.0}, {{10, 0}, 720.0}, {{11, 0}, 640.0}});
  PolySolution sol = solve_joint_polynomial(st, t, 1, 0);
  REQUIRE(sol.status == SolveStatus::Ok);
  CHECK(sol.a == 0.8);  // the paper's n1(1) n2(1) / (n n12(1)) form, exactly
}

TEST_CASE("no interior root when the child ratios sum below one") {
  std::vector<double> c = {0.4, 0.5};
  CHECK(!solve_loss_fraction(c));
  // partition boundary: sum exactly one
  std::vector<double> part = {0.5, 0.5};
  CHECK(!solve_loss_fraction(part));
}

TEST_CASE("solver root matches a fine-grid scan") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.05, 0.999);
  for (int rep = 0; rep < 200; ++rep) {
    int k = 2 + static_cast<int>(rng() % 5);
    std::vector<double> c(k);
    double sum = 0;
    for (double& cj : c) {
      cj = u(rng);
      sum += cj;
    }
    if (sum <= 1.001) continue;
    auto root = solve_loss_fraction(c);
    REQUIRE(root);
    CHECK(root->residual < 1e-12);
    double grid_root = 0;
    int changes = grid_sign_changes(c, &grid_root);
    CHECK(changes == 1);  // root uniqueness
    CHECK(std::abs(root->x - grid_root) < 1e-5 + 1e-9);
  }
}

TEST_CASE("merge invariance at exact statistics, fanout 3..5") {
  // at model-consistent counts the binary-merged closed form and the直
  // full-degree root coincide
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> th(0.02, 0.3);
  for (int fanout = 3; fanout <= 5; ++fanout) {
    for (int rep = 0; rep < 10; ++rep) {
      Topology t = star(fanout);
      LossModel loss;
      for (const Link& l : t.links()) loss.overrides[l.id] = th(rng);
      StatTable st = expected_stats(t, loss, {{0, 1000000}});

      SolveOptions direct;
      direct.use_merge_seed = false;
      PolySolution a = solve_joint_polynomial(st, t, 1, 0, direct);
      REQUIRE(a.status == SolveStatus::Ok);

      // merged closed form on its own (the split with the largest overlap)
      double pooled = st.confirmed_pooled(1);
      std::vector<NodeId> d1, d2;
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
      double x_merged = binary_loss_fraction(ca, cb);
      double a_merged = gamma_hat(st, 1, 0) / (1.0 - x_merged);
      CHECK(a.a == doctest::Approx(a_merged).epsilon(1e-9));

      // and the true rate is recovered exactly at expected counts
      CHECK(a.a == doctest::Approx(loss.pass(1)).epsilon(1e-9));
    }
  }
}

TEST_CASE("merged seed does not change the refined root") {
  Topology t = star(4);
  LossModel loss;
  loss.default_theta = 0.1;
  ObservationSet obs = simulate(t, loss, {{0, 20000}}, 3);
  StatTable st = StatTable::build(t, obs);
  SolveOptions direct;
  direct.use_merge_seed = false;
  PolySolution with_seed = solve_joint_polynomial(st, t, 1, 0);
  PolySolution without = solve_joint_polynomial(st, t, 1, 0, direct);
  REQUIRE(with_seed.status == SolveStatus::Ok);
  CHECK(with_seed.merged_seed);
  CHECK(with_seed.a == doctest::Approx(without.a).epsilon(1e-12));
}

TEST_CASE("gamma_hat") {
  Topology t = star(2);
  StatTable st = StatTable::from_counts(t, {{0, 1000}},
                                        {{{1, 0}, 720.0}, {{10, 0}, 700.0}, {{11, 0}, 650.0}});
  CHECK(gamma_hat(st, 1, 0) == 0.72);
  CHECK(gamma_hat(st, 99, 0) == 0.0);  // no observations recorded
  StatTable all = StatTable::from_counts(t, {{0, 500}}, {{{1, 0}, 500.0}});
  CHECK(gamma_hat(all, 1, 0) == 1.0);
}

TEST_CASE("propagate_sources follows the gamma ratios and clamps") {
  // joint node with two sources
  Topology f2 = fixture_f2();
  StatTable st = StatTable::from_counts(
      f2, {{0, 1000}, {1, 1000}},
      {{{1, 0}, 950.0}, {{2, 1}, 940.0},
       {{3, 0}, 720.0}, {{3, 1}, 648.0},
       {{4, 0}, 500.0}, {{4, 1}, 450.0},
       {{5, 0}, 400.0}, {{5, 1}, 360.0}});
  auto rates = propagate_sources(0.729, 0, st, 3);
  CHECK(rates.at(0) == doctest::Approx(0.729).epsilon(1e-15));
  CHECK(rates.at(1) == doctest::Approx(0.729 * 0.9).epsilon(1e-12));  // 0.6561

  // a ratio pushing A above one is clamped and flagged
  std::vector<SourceId> clamped;
  auto up = propagate_sources(0.99, 1, st, 3, &clamped);
  CHECK(up.at(0) == 1.0);
  CHECK(clamped == std::vector<SourceId>{0});
}

TEST_CASE("n_star") {
  Topology t = star(2);
  StatTable st = StatTable::from_counts(t, {{0, 1000}},
                                        {{{1, 0}, 720.0}, {{10, 0}, 650.0}, {{11, 0}, 640.0}});
  CHECK(n_star(0.8, 0, st, 1) == doctest::Approx(800.0).epsilon(1e-12));

  // two sources, 1000 probes and gamma 0.72 each, A = 0.8: the estimated
  // arrivals are sum_s n^s A(s,i) = 2000 * 0.8
  Topology f2 = fixture_f2();
  StatTable two = StatTable::from_counts(f2, {{0, 1000}, {1, 1000}},
                                         {{{3, 0}, 720.0}, {{3, 1}, 720.0}});
  CHECK(n_star(0.8, 0, two, 3) == doctest::Approx(1600.0).epsilon(1e-12));
}

TEST_CASE("beta_hat") {
  CHECK(beta_hat(0.8, 0.72) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(beta_hat(0.63, 0.63) == 1.0);
  CHECK_THROWS_AS(beta_hat(0.0, 0.5), InputError);
}

TEST_CASE("reference source invariance") {
  // the solved link rates do not depend on which source anchors the
  // polynomial (the cross-source ratios make them k-invariant)
  Topology f2 = fixture_f2();
  LossModel loss;
  loss.default_theta = 0.07;
  std::map<SourceId, std::int64_t> counts = {{0, 5000}, {1, 4000}};
  ObservationSet obs = simulate(f2, loss, counts, 31);
  StatTable st = StatTable::build(f2, obs);

  PolySolution k0 = solve_joint_polynomial(st, f2, 3, 0);
  PolySolution k1 = solve_joint_polynomial(st, f2, 3, 1);
  REQUIRE(k0.status == SolveStatus::Ok);
  REQUIRE(k1.status == SolveStatus::Ok);
  CHECK(k0.beta == doctest::Approx(k1.beta).epsilon(1e-12));
  // consistent condition: identical beta_hat from either source
  CHECK(beta_hat(k0.a, gamma_hat(st, 3, 0)) ==
        doctest::Approx(beta_hat(k1.a, gamma_hat(st, 3, 1))).epsilon(1e-12));
  // Eq.-8 consistency across the two anchors
  auto from0 = propagate_sources(k0.a, 0, st, 3);
  auto from1 = propagate_sources(k1.a, 1, st, 3);
  CHECK(from0.at(1) == doctest::Approx(from1.at(1)).epsilon(1e-12));
  CHECK(from0.at(0) == doctest::Approx(from1.at(0)).epsilon(1e-12));
}

TEST_CASE("zero gamma and degenerate nodes are reported, not thrown") {
  Topology t = star(2);
  StatTable zero = StatTable::from_counts(t, {{0, 1000}},
                                          {{{1, 0}, 0.0}, {{10, 0}, 0.0}, {{11, 0}, 0.0}});
  CHECK(solve_joint_polynomial(zero, t, 1, 0).status == SolveStatus::ZeroGamma);

  StatTable one_child = StatTable::from_counts(t, {{0, 1000}},
                                               {{{1, 0}, 500.0}, {{10, 0}, 400.0}, {{11, 0}, 0.0}});
  CHECK(solve_joint_polynomial(one_child, t, 1, 0).status == SolveStatus::TooFewChildren);
}
