#include "losstomo/estimator_decompose.hpp"

#include <algorithm>
#include <cmath>

namespace losstomo {

std::optional<double> minc_solve_node(double gamma_parent, std::span<const double> gamma_children,
                                      double tol) {
  if (!(gamma_parent > 0.0)) return std::nullopt;
  for (double g : gamma_children) {
    if (g < 0.0 || g > gamma_parent + 1e-15) throw InputError("child gamma above parent gamma");
    if (g == gamma_parent) return gamma_parent;  // subtree looks lossless
  }
  auto H = [&](double A) {
    double prod = 1.0;
    for (double g : gamma_children) prod *= 1.0 - g / A;
    return 1.0 - gamma_parent / A - prod;
  };

  double lo = gamma_parent;  // H(gamma_parent) < 0
  double hi = std::max(1.0, gamma_parent * 2.0);
  bool bracketed = false;
  for (int i = 0; i < 40; ++i) {
    if (H(hi) > 0.0) {
      bracketed = true;
      break;
    }
    hi *= 2.0;
    if (hi > 1e9) break;
  }
  if (!bracketed) return std::nullopt;  // partition-like, no interior root

  for (int i = 0; i < 300; ++i) {
    double mid = 0.5 * (lo + hi);
    if (H(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= tol * std::max(1.0, lo)) break;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct PieceContext {
  std::vector<SourceId> sources;
  std::set<NodeId> nodes;
  std::set<NodeId> joint_leaves;
};

PieceContext piece_context(const Topology& t, const DecomposedTree& piece,
                           const StatTable& stats) {
  PieceContext ctx;
  for (SourceId s : t.node_sources(piece.root))
    if (std::binary_search(stats.source_ids().begin(), stats.source_ids().end(), s))
      ctx.sources.push_back(s);

  ctx.nodes.insert(piece.root);
  for (LinkId l : piece.links) {
    ctx.nodes.insert(t.link(l).parent);
    ctx.nodes.insert(t.link(l).child);
  }
  ctx.joint_leaves.insert(piece.joint_leaves.begin(), piece.joint_leaves.end());
  return ctx;
}

double pooled_piece(const StatTable& stats, const PieceContext& ctx, NodeId v) {
  double n = 0;
  for (SourceId s : ctx.sources) n += stats.confirmed(v, s);
  return n;
}

// the engine shared by the descendant (top down) and ancestor (bottom up)
// estimators; per-node polynomials are independent, so only the loop
// direction differs
TreeEstimate estimate_piece(const Topology& t, const DecomposedTree& piece,
                            std::optional<double> root_count, const StatTable& stats,
                            const PathRateTable& joint_rates, ConsistencyReport* report,
                            bool bottom_up) {
  TreeEstimate est;
  est.tree_id = piece.tree_id;
  est.group = piece.group;
  est.root = piece.root;
  est.root_count = root_count;

  PieceContext ctx = piece_context(t, piece, stats);
  std::map<NodeId, std::optional<double>> rel;
  rel[piece.root] = 1.0;

  std::vector<NodeId> order;
  for (NodeId v : t.topo_order())
    if (ctx.nodes.count(v) && v != piece.root) order.push_back(v);
  if (bottom_up) std::reverse(order.begin(), order.end());

  for (NodeId v : order) {
    if (!root_count || *root_count <= 0.0) {
      rel[v] = std::nullopt;
      continue;
    }
    const double N = *root_count;
    if (ctx.joint_leaves.count(v)) {
      // known leaf: arrivals from this piece's sources, estimated in step 1
      const NodeEstimate* ne = joint_rates.find(v);
      if (!ne || !ne->solved()) {
        rel[v] = std::nullopt;
        continue;
      }
      double sum = 0.0;
      bool ok = true;
      for (SourceId s : ctx.sources) {
        auto it = ne->per_source.find(s);
        if (it == ne->per_source.end()) {
          ok = false;
          break;
        }
        sum += static_cast<double>(stats.probes_sent(s)) * it->second.a;
      }
      rel[v] = ok ? std::optional<double>(sum / N) : std::nullopt;
      continue;
    }
    if (t.is_leaf(v)) {
      rel[v] = pooled_piece(stats, ctx, v) / N;
      continue;
    }
    const double pooled = pooled_piece(stats, ctx, v);
    if (pooled == 0) {
      rel[v] = std::nullopt;
      continue;
    }
    std::vector<double> child_gammas;
    for (NodeId c : t.children(v)) {
      double nc = pooled_piece(stats, ctx, c);
      if (nc > 0) child_gammas.push_back(nc / N);
    }
    if (child_gammas.size() < 2) {
      rel[v] = std::nullopt;  // serial segment, deferred to composites
      continue;
    }
    auto a = minc_solve_node(pooled / N, child_gammas);
    if (!a) {
      if (report)
        report->add_node(v, ctx.sources.size() > 1 ? Flag::MultiSourcePartition : Flag::Partition);
      rel[v] = std::nullopt;
      continue;
    }
    if (*a > 1.0) {
      if (report) report->add_node(v, Flag::InfeasibleRate);
      a = 1.0;
    }
    rel[v] = a;
  }

  for (const auto& [v, r] : rel)
    if (r) est.relative_rate[v] = *r;

  // links and serial composites, piece local
  std::set<LinkId> piece_links(piece.links.begin(), piece.links.end());
  std::map<LinkId, int> chain_group;
  int gid = 0;
  for (const SerialChain& ch : serial_chains(t)) {
    if (!piece_links.count(ch.links.front())) continue;
    CompositeGroup g;
    g.id = gid++;
    g.top = ch.top;
    g.bottom = ch.bottom;
    g.links = ch.links;
    std::optional<double> top = rel.count(ch.top) ? rel[ch.top] : std::nullopt;
    std::optional<double> bot = rel.count(ch.bottom) ? rel[ch.bottom] : std::nullopt;
    if (top && bot && *top > 0.0) {
      double pass = *bot / *top;
      if (pass > 1.0) {
        pass = 1.0;
        if (report)
          for (LinkId l : ch.links) report->add_link(l, Flag::InfeasibleRate);
      }
      g.theta = 1.0 - pass;
    }
    for (LinkId l : ch.links) chain_group[l] = g.id;
    est.composites.push_back(std::move(g));
  }

  for (LinkId lid : piece.links) {
    LinkEstimate le;
    auto cit = chain_group.find(lid);
    if (cit != chain_group.end()) {
      le.composite = cit->second;
      est.links[lid] = le;
      continue;
    }
    const Link& l = t.link(lid);
    std::optional<double> pu = rel.count(l.parent) ? rel[l.parent] : std::nullopt;
    std::optional<double> pv = rel.count(l.child) ? rel[l.child] : std::nullopt;
    if (pu && pv && *pu > 0.0) {
      double pass = *pv / *pu;
      if (pass > 1.0) {
        pass = 1.0;
        le.clamped = true;
        if (report) report->add_link(lid, Flag::InfeasibleRate);
      }
      le.theta = 1.0 - pass;
    }
    est.links[lid] = le;
  }
  return est;
}

}  // namespace

TreeEstimate estimate_descendant_tree(const Topology& t, const DecomposedTree& piece,
                                      std::optional<double> n_star_root, const StatTable& stats,
                                      const PathRateTable& joint_rates,
                                      ConsistencyReport* report) {
  return estimate_piece(t, piece, n_star_root, stats, joint_rates, report, false);
}

TreeEstimate estimate_ancestor_tree(const Topology& t, const DecomposedTree& piece,
                                    const StatTable& stats, const PathRateTable& joint_rates,
                                    ConsistencyReport* report) {
  std::optional<double> root_count;
  if (t.is_source_root(piece.root)) {
    for (const Source& src : t.sources())
      if (src.root == piece.root) root_count = static_cast<double>(stats.probes_sent(src.id));
  } else if (const NodeEstimate* ne = joint_rates.find(piece.root); ne && ne->solved()) {
    root_count = ne->n_star;
  }
  return estimate_piece(t, piece, root_count, stats, joint_rates, report, true);
}

DecomposedEstimate run_pipeline(const Topology& t, const StatTable& stats) {
  DecomposedEstimate result;
  result.report = precheck(stats, t);
  EstimationPlan plan = apply(result.report, stats, t);

  JointNodeSet jset = joint_nodes(t);
  std::vector<DecomposedTree> pieces = decompose(t, jset);

  // step 1: pass rates of the paths from the sources to each joint node
  for (NodeId j : jset.joint)
    result.joint_rates.nodes[j] =
        solve_node_estimate(t, stats, j, plan.nodes.at(j), &result.report);

  // steps 2 and 3: the independent trees
  for (const DecomposedTree& piece : pieces) {
    TreeEstimate te;
    if (piece.group == TreeGroup::Descendant && !t.is_source_root(piece.root)) {
      std::optional<double> n_star_root;
      if (const NodeEstimate* ne = result.joint_rates.find(piece.root); ne && ne->solved())
        n_star_root = ne->n_star;
      te = estimate_descendant_tree(t, piece, n_star_root, stats, result.joint_rates,
                                    &result.report);
    } else if (piece.group == TreeGroup::Descendant) {
      std::optional<double> n_probes;
      for (const Source& src : t.sources())
        if (src.root == piece.root) n_probes = static_cast<double>(stats.probes_sent(src.id));
      te = estimate_descendant_tree(t, piece, n_probes, stats, result.joint_rates,
                                    &result.report);
    } else {
      te = estimate_ancestor_tree(t, piece, stats, result.joint_rates, &result.report);
    }
    result.trees.push_back(std::move(te));
  }

  // merge: every link of E appears in exactly one piece
  int gid = 0;
  for (const TreeEstimate& te : result.trees) {
    std::map<int, int> regroup;
    for (const CompositeGroup& g : te.composites) {
      CompositeGroup merged_g = g;
      regroup[g.id] = merged_g.id = gid++;
      result.merged.composites.push_back(std::move(merged_g));
    }
    for (const auto& [lid, le] : te.links) {
      LinkEstimate copy = le;
      if (copy.composite) copy.composite = regroup.at(*copy.composite);
      result.merged.links[lid] = copy;
    }
  }
  return result;
}

}  // namespace losstomo
