#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "losstomo/estimator_path.hpp"
#include "losstomo/fixtures.hpp"
#include "losstomo/likelihood_oracle.hpp"

using namespace losstomo;

namespace {

std::map<SourceId, std::int64_t> counts_for(const Topology& t, std::int64_t n) {
  std::map<SourceId, std::int64_t> counts;
  for (const Source& s : t.sources()) counts[s.id] = n;
  return counts;
}

// theta vector in t.links() order from a loss model
std::vector<double> theta_vec(const Topology& t, const LossModel& loss) {
  std::vector<double> v;
  for (const Link& l : t.links()) v.push_back(loss.theta(l.id));
  return v;
}

// theta vector from a path estimate (only valid when every link has a value)
std::vector<double> theta_vec(const Topology& t, const PathEstimate& pe) {
  std::vector<double> v;
  for (const Link& l : t.links()) {
    auto th = pe.links.links.at(l.id).theta;
    REQUIRE(th);
    v.push_back(std::clamp(*th, 1e-9, 1.0 - 1e-9));
  }
  return v;
}

StatTable f1_exact_counts() {
  // n = 1000, union 784, children 720 and 640 (pairwise 576)
  return StatTable::from_counts(fixture_f1(), {{0, 1000}},
                                {{{1, 0}, 784.0}, {{2, 0}, 720.0}, {{3, 0}, 640.0}});
}

}  // namespace

TEST_CASE("loglik vanishes when nothing is uncertain and losses vanish") {
  Topology f1 = fixture_f1();
  StatTable st = StatTable::from_counts(f1, {{0, 100}},
                                        {{{1, 0}, 100.0}, {{2, 0}, 100.0}, {{3, 0}, 100.0}});
  std::vector<double> tiny(3, 1e-12);
  CHECK(loglik(tiny, st, f1) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("loglik equals the hand-computed sum on the three-probe fixture") {
  Topology f1 = fixture_f1();
  StatTable st = StatTable::from_counts(f1, {{0, 3}},
                                        {{{1, 0}, 3.0}, {{2, 0}, 2.0}, {{3, 0}, 2.0}});
  std::vector<double> theta = {0.1, 0.2, 0.3};
  double beta1 = 1.0 - 0.2 * 0.3;
  double by_hand = 3 * std::log(0.9) + 0 * std::log(1 - 0.9 * beta1) + 2 * std::log(0.8) +
                   std::log(0.2) + 2 * std::log(0.7) + std::log(0.3);
  CHECK(loglik(theta, st, f1) == doctest::Approx(by_hand).epsilon(1e-12));
}

TEST_CASE("non-interior theta is a domain error") {
  Topology f1 = fixture_f1();
  StatTable st = f1_exact_counts();
  CHECK_THROWS_AS(loglik({0.0, 0.1, 0.1}, st, f1), InputError);
  CHECK_THROWS_AS(loglik({0.5, 1.0, 0.1}, st, f1), InputError);
  CHECK_THROWS_AS(loglik({0.5, 0.1}, st, f1), InputError);  // dimension
}

TEST_CASE("oracle equals the closed form on exact counts") {
  Topology f1 = fixture_f1();
  StatTable st = f1_exact_counts();
  OracleResult res = maximize(st, f1);
  REQUIRE(res.converged);
  // A_1 = 720*640/(1000*576) = 0.8, leaf rates by ratio
  CHECK(*res.theta.at(1) == doctest::Approx(0.2).epsilon(1e-8));
  CHECK(*res.theta.at(2) == doctest::Approx(1.0 - 0.72 / 0.8).epsilon(1e-8));
  CHECK(*res.theta.at(3) == doctest::Approx(1.0 - 0.64 / 0.8).epsilon(1e-8));
}

TEST_CASE("the path estimate is a maximizer: local probes never improve") {
  Topology f1 = fixture_f1();
  LossModel loss;
  loss.overrides[1] = 0.05;
  loss.overrides[2] = 0.1;
  loss.overrides[3] = 0.15;
  ObservationSet obs = simulate(f1, loss, counts_for(f1, 5000), 3);
  StatTable st = StatTable::build(f1, obs);
  PathEstimate pe = estimate_all_paths(f1, st);
  std::vector<double> at = theta_vec(f1, pe);
  double best = loglik(at, st, f1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> probe(at);
    for (double& x : probe) x = std::clamp(x + u(rng), 1e-6, 1.0 - 1e-6);
    CHECK(loglik(probe, st, f1) <= best + 1e-9);
  }
}

TEST_CASE("ten random starts land on the same maximizer") {
  Topology f2 = fixture_f2();
  LossModel loss;
  loss.default_theta = 0.06;
  ObservationSet obs = simulate(f2, loss, counts_for(f2, 5000), 8);
  StatTable st = StatTable::build(f2, obs);

  OracleOptions opts;
  opts.starts = 1;
  std::vector<std::map<LinkId, std::optional<double>>> runs;
  std::vector<double> composite_first;
  for (int s = 0; s < 10; ++s) {
    OracleOptions o;
    o.starts = 1;
    o.seed = 1000 + s;
    // vary theta0 across starts
    std::mt19937_64 rng(s + 1);
    std::uniform_real_distribution<double> u(0.01, 0.3);
    std::vector<double> theta0(f2.links().size());
    for (double& x : theta0) x = u(rng);
    OracleResult r = maximize(st, f2, theta0, o);
    REQUIRE(r.converged);
    runs.push_back(r.theta);
    composite_first.push_back(*r.composites.at(0).theta);
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    for (const auto& [lid, th] : runs[0]) {
      if (!th) continue;
      CHECK(*runs[i].at(lid) == doctest::Approx(*th).epsilon(1e-6));
    }
    CHECK(composite_first[i] == doctest::Approx(composite_first[0]).epsilon(1e-6));
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  // uniform theta on lossless statistics
  Topology f1 = fixture_f1();
  StatTable lossless = StatTable::from_counts(
      f1, {{0, 100}}, {{{1, 0}, 100.0}, {{2, 0}, 100.0}, {{3, 0}, 100.0}});
  CHECK(gradient_check({0.5, 0.5, 0.5}, lossless, f1) < 1e-5);

  // random statistics on F1
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    double n1 = 500 + static_cast<double>(rng() % 400);
    double n2 = n1 * (0.5 + 0.4 * (static_cast<double>(rng() % 100) / 100.0));
    double n3 = n1 * (0.5 + 0.4 * (static_cast<double>(rng() % 100) / 100.0));
    StatTable st = StatTable::from_counts(f1, {{0, 1000}},
                                          {{{1, 0}, n1}, {{2, 0}, n2}, {{3, 0}, n3}});
    std::uniform_real_distribution<double> u(0.05, 0.6);
    std::vector<double> theta = {u(rng), u(rng), u(rng)};
    CHECK(gradient_check(theta, st, f1) < 1e-5);
  }

  // and on a two-source network
  Topology f2 = fixture_f2();
  LossModel loss;
  loss.default_theta = 0.1;
  ObservationSet obs = simulate(f2, loss, counts_for(f2, 2000), 2);
  StatTable st = StatTable::build(f2, obs);
  std::vector<double> theta(f2.links().size(), 0.13);
  CHECK(gradient_check(theta, st, f2) < 1e-5);
}

TEST_CASE("gradient vanishes at the path estimate") {
  // the estimator's output is a stationary point of the likelihood
  Topology f1 = fixture_f1();
  StatTable st = f1_exact_counts();
  PathEstimate pe = estimate_all_paths(f1, st);
  std::vector<double> at = theta_vec(f1, pe);
  auto g = loglik_gradient(at, st, f1);
  double norm = 0;
  for (double gi : g) norm += gi * gi;
  CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("concavity probe: never below the chord") {
  Topology f2 = fixture_f2();
  LossModel loss;
  loss.default_theta = 0.08;
  ObservationSet obs = simulate(f2, loss, counts_for(f2, 3000), 12);
  StatTable st = StatTable::build(f2, obs);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.02, 0.7);
  const std::size_t ne = f2.links().size();
  for (int seg = 0; seg < 100; ++seg) {
    std::vector<double> a(ne), b(ne), mid(ne);
    for (std::size_t i = 0; i < ne; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      mid[i] = 0.5 * (a[i] + b[i]);
    }
    double la = loglik(a, st, f2), lb = loglik(b, st, f2), lm = loglik(mid, st, f2);
    CHECK(lm >= 0.5 * (la + lb) - 1e-9 * (1.0 + std::abs(lm)));
  }
}

TEST_CASE("four-case stationarity holds at the maximizer on trees") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    RandomNet net = random_identifiable_net(seed, 10, 1, 0.03, 0.25);
    ObservationSet obs = simulate(net.topology, net.loss, counts_for(net.topology, 4000), seed);
    StatTable st = StatTable::build(net.topology, obs);
    PathEstimate pe = estimate_all_paths(net.topology, st);
    bool all = true;
    for (const Link& l : net.topology.links())
      if (!pe.links.links.at(l.id).theta || *pe.links.links.at(l.id).theta <= 0.0) all = false;
    if (!all) continue;  // zero estimates fall on the boundary
    std::vector<double> at;
    for (const Link& l : net.topology.links())
      at.push_back(std::clamp(*pe.links.links.at(l.id).theta, 1e-9, 1.0 - 1e-9));
    CHECK(stationarity_residual(at, st, net.topology) < 1e-6);
  }
}

TEST_CASE("oracle refuses oversized problems") {
  Topology f3 = fixture_f3();  // 24 links
  ObservationSet obs = simulate(f3, f3_loss(), counts_for(f3, 100), 1);
  StatTable st = StatTable::build(f3, obs);
  CHECK_THROWS_AS(maximize(st, f3), InputError);
}
