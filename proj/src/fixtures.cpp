#include "losstomo/fixtures.hpp"

#include <random>

namespace losstomo {

Topology fixture_f1() {
  return Topology({0, 1, 2, 3}, {{1, 0, 1}, {2, 1, 2}, {3, 1, 3}}, {{0, 0}});
}

Topology fixture_f2() {
  return Topology({10, 20, 1, 2, 3, 4, 5},
                  {{1, 10, 1}, {2, 1, 3}, {3, 20, 2}, {4, 2, 3}, {5, 3, 4}, {6, 3, 5}},
                  {{0, 10}, {1, 20}});
}

Topology fixture_f3() {
  std::vector<NodeId> nodes = {0, 16};
  std::vector<Link> links;
  // source 0 chain: 1..4 internal, 5..8 private receivers
  for (NodeId n : {1, 2, 3, 4, 5, 6, 7, 8}) nodes.push_back(n);
  links.push_back({1, 0, 1});
  links.push_back({2, 1, 2});
  links.push_back({3, 1, 5});
  links.push_back({4, 2, 3});
  links.push_back({5, 2, 6});
  links.push_back({6, 3, 4});
  links.push_back({7, 3, 7});
  links.push_back({8, 4, 30});
  links.push_back({9, 4, 8});
  // source 1 chain: 17..20 internal, 21..24 private receivers
  for (NodeId n : {17, 18, 19, 20, 21, 22, 23, 24}) nodes.push_back(n);
  links.push_back({10, 16, 17});
  links.push_back({11, 17, 18});
  links.push_back({12, 17, 21});
  links.push_back({13, 18, 19});
  links.push_back({14, 18, 22});
  links.push_back({15, 19, 20});
  links.push_back({16, 19, 23});
  links.push_back({17, 20, 30});
  links.push_back({18, 20, 24});
  // intersection at joint node 30
  for (NodeId n : {30, 31, 32, 33, 34, 35, 36}) nodes.push_back(n);
  links.push_back({19, 30, 31});
  links.push_back({20, 30, 32});
  links.push_back({21, 31, 33});
  links.push_back({22, 31, 34});
  links.push_back({23, 32, 35});
  links.push_back({24, 32, 36});

  return Topology(std::move(nodes), std::move(links), {{0, 0}, {1, 16}});
}

std::vector<LinkId> f3_intersection_links() { return {19, 20, 21, 22, 23, 24}; }

std::pair<LinkId, LinkId> f3_sibling_pair() { return {21, 22}; }

LossModel f3_loss() {
  LossModel loss;
  loss.default_theta = 0.01;
  loss.overrides[21] = 0.10;
  return loss;
}

std::optional<Topology> builtin_fixture(const std::string& name) {
  if (name == "F1" || name == "f1") return fixture_f1();
  if (name == "F2" || name == "f2") return fixture_f2();
  if (name == "F3" || name == "f3") return fixture_f3();
  return std::nullopt;
}

namespace {

struct NetBuilder {
  std::vector<NodeId> nodes;
  std::vector<Link> links;
  std::vector<Source> sources;
  NodeId next_node = 0;
  LinkId next_link = 1;

  NodeId node() {
    nodes.push_back(next_node);
    return next_node++;
  }
  LinkId link(NodeId p, NodeId c) {
    links.push_back({next_link, p, c});
    return next_link++;
  }
};

// grows a proper subtree under `root`: every internal node gets >= 2 children
void grow_subtree(NetBuilder& b, std::mt19937_64& rng, NodeId root, int depth, int& budget) {
  if (budget < 2 || depth == 0) return;
  std::uniform_int_distribution<int> fan(2, budget >= 3 && rng() % 3 == 0 ? 3 : 2);
  int k = std::min(fan(rng), budget);
  if (k < 2) return;
  std::vector<NodeId> kids;
  for (int i = 0; i < k; ++i) {
    NodeId c = b.node();
    b.link(root, c);
    --budget;
    kids.push_back(c);
  }
  for (NodeId c : kids)
    if (rng() % 2 == 0) grow_subtree(b, rng, c, depth - 1, budget);
}

}  // namespace

RandomNet random_identifiable_net(std::uint64_t seed, int max_links, int n_sources,
                                  double theta_lo, double theta_hi) {
  if (n_sources < 1 || n_sources > 2) throw InputError("random net supports 1 or 2 sources");
  std::mt19937_64 rng(seed);
  NetBuilder b;

  if (n_sources == 1) {
    NodeId root = b.node();
    b.sources.push_back({0, root});
    NodeId top = b.node();
    b.link(root, top);
    int budget = max_links - 1;
    grow_subtree(b, rng, top, 3, budget);
    if (b.links.size() < 3) {  // ensure the top actually branches
      NodeId c1 = b.node(), c2 = b.node();
      b.link(top, c1);
      b.link(top, c2);
    }
  } else {
    // shared part first: joint node with a proper subtree
    NodeId joint = b.node();
    int budget = max_links;
    // reserve links for the two source sides (up to 3 each)
    int side_budget[2];
    for (int s = 0; s < 2; ++s) side_budget[s] = (rng() % 2 == 0) ? 1 : 3;
    budget -= side_budget[0] + side_budget[1];
    int shared_budget = std::max(2, budget);
    grow_subtree(b, rng, joint, 2, shared_budget);
    if (b.links.empty()) {
      NodeId c1 = b.node(), c2 = b.node();
      b.link(joint, c1);
      b.link(joint, c2);
    }
    for (int s = 0; s < 2; ++s) {
      NodeId root = b.node();
      b.sources.push_back({s, root});
      if (side_budget[s] == 1) {
        b.link(root, joint);
      } else {
        // root -> x, x -> {private receiver, joint}
        NodeId x = b.node();
        b.link(root, x);
        NodeId priv = b.node();
        b.link(x, priv);
        b.link(x, joint);
      }
    }
  }

  RandomNet net{Topology(b.nodes, b.links, b.sources), LossModel{}};
  std::uniform_real_distribution<double> th(theta_lo, theta_hi);
  for (const Link& l : net.topology.links()) net.loss.overrides[l.id] = th(rng);
  return net;
}

ModelMoments model_moments(const Topology& t, const LossModel& loss) {
  ModelMoments m;
  const auto& order = t.topo_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeId v = *it;
    if (t.is_leaf(v)) {
      m.beta[v] = 1.0;
      continue;
    }
    double prod = 1.0;
    for (LinkId lid : t.out_links(v)) prod *= 1.0 - loss.pass(lid) * m.beta.at(t.link(lid).child);
    m.beta[v] = 1.0 - prod;
  }
  for (NodeId v : order) {
    if (t.is_source_root(v)) {
      for (const Source& s : t.sources())
        if (s.root == v) m.path_rate[v][s.id] = 1.0;
      continue;
    }
    for (SourceId s : t.node_sources(v)) {
      NodeId parent = *t.parent_node(s, v);
      LinkId in = *t.parent_link(s, v);
      m.path_rate[v][s] = m.path_rate.at(parent).at(s) * loss.pass(in);
    }
  }
  return m;
}

StatTable expected_stats(const Topology& t, const LossModel& loss,
                         const std::map<SourceId, std::int64_t>& probes,
                         int max_joint_children) {
  ModelMoments m = model_moments(t, loss);
  std::map<std::pair<NodeId, SourceId>, double> node_confirmed;
  std::map<std::tuple<NodeId, SourceId, std::vector<NodeId>>, double> joint;

  for (NodeId v : t.topo_order()) {
    if (t.is_source_root(v)) continue;
    for (SourceId s : t.node_sources(v)) {
      if (!probes.count(s)) continue;
      double n = static_cast<double>(probes.at(s));
      node_confirmed[{v, s}] = n * m.path_rate.at(v).at(s) * m.beta.at(v);
    }
  }
  // expected AND counts: sibling subtrees are independent given arrival
  for (NodeId v : t.topo_order()) {
    const auto& ch = t.children(v);
    if (ch.size() < 2 || static_cast<int>(ch.size()) > max_joint_children) continue;
    std::map<NodeId, double> trace;  // P(trace below child | arrival at v)
    for (LinkId lid : t.out_links(v)) trace[t.link(lid).child] = loss.pass(lid) * m.beta.at(t.link(lid).child);
    const std::uint32_t full = (1u << ch.size()) - 1;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
      if (std::popcount(mask) < 2) continue;
      std::vector<NodeId> sub;
      double prod = 1.0;
      for (std::size_t b = 0; b < ch.size(); ++b)
        if (mask & (1u << b)) {
          sub.push_back(ch[b]);
          prod *= trace.at(ch[b]);
        }
      for (SourceId s : t.node_sources(v)) {
        if (!probes.count(s)) continue;
        double n = static_cast<double>(probes.at(s));
        joint[{v, s, sub}] = n * m.path_rate.at(v).at(s) * prod;
      }
    }
  }
  return StatTable::from_counts(t, probes, node_confirmed, joint);
}

}  // namespace losstomo
