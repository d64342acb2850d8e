#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "losstomo/probe_sim.hpp"
#include "losstomo/statistics.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// F1: single source 0 at node 0; root link 1 to node 1; leaf links 2, 3 to
// receivers 2 and 3.
Topology fixture_f1();

// F2: two sources meeting at joint node 3.
//   source 0 at node 10: link 1 (10->1), link 2 (1->3)
//   source 1 at node 20: link 3 (20->2), link 4 (2->3)
//   intersection: link 5 (3->4), link 6 (3->5)
Topology fixture_f2();

// F3: the canonical 24-link two-source experiment network. Each source has a
// private 4-level chain where every level branches into one private receiver,
// ending at the joint node 30; the intersection under node 30 is a two-level
// binary tree with four shared receivers (links 19-24).
Topology fixture_f3();

// intersection link ids of F3 (19..24)
std::vector<LinkId> f3_intersection_links();
// the high-loss intersection leaf link and its low-loss sibling
std::pair<LinkId, LinkId> f3_sibling_pair();
// 1% everywhere, 10% on the first sibling (the F3 experiment defaults)
LossModel f3_loss();

std::optional<Topology> builtin_fixture(const std::string& name);  // "F1"/"F2"/"F3"

// A random general topology whose links are all individually identifiable:
// internal nodes branch, sources have a single child, joint nodes branch.
// Loss rates are drawn uniformly from [theta_lo, theta_hi].
struct RandomNet {
  Topology topology;
  LossModel loss;
};
RandomNet random_identifiable_net(std::uint64_t seed, int max_links = 12, int n_sources = 1,
                                  double theta_lo = 0.01, double theta_hi = 0.15);

// model quantities at known parameters (used by tests against exact counts)
struct ModelMoments {
  std::map<NodeId, double> beta;                           // subtree pass rates
  std::map<NodeId, std::map<SourceId, double>> path_rate;  // A(s,i)
};
ModelMoments model_moments(const Topology& t, const LossModel& loss);

// The expected sufficient statistics at the model parameters: counts are
// n^s * A(s,i) * beta_i, joint counts follow from the conditional
// independence of sibling subtrees. max_joint_children bounds the subsets.
StatTable expected_stats(const Topology& t, const LossModel& loss,
                         const std::map<SourceId, std::int64_t>& probes,
                         int max_joint_children = 6);

}  // namespace losstomo
