#include "losstomo/topology.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace losstomo {

namespace {

// FNV-1a, enough for a stable file-header fingerprint.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Topology::Topology(std::vector<NodeId> nodes, std::vector<Link> links,
                   std::vector<Source> sources,
                   std::map<LinkId, std::vector<SourceId>> tree_membership)
    : nodes_(std::move(nodes)),
      links_(std::move(links)),
      sources_(std::move(sources)),
      membership_(std::move(tree_membership)) {
  std::sort(nodes_.begin(), nodes_.end());
  std::sort(links_.begin(), links_.end(),
            [](const Link& a, const Link& b) { return a.id < b.id; });
  std::sort(sources_.begin(), sources_.end(),
            [](const Source& a, const Source& b) { return a.id < b.id; });
  build_derived();
}

void Topology::build_derived() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) node_index_.emplace(nodes_[i], i);
  for (std::size_t i = 0; i < links_.size(); ++i) link_index_.emplace(links_[i].id, i);
  for (std::size_t i = 0; i < sources_.size(); ++i) source_index_.emplace(sources_[i].id, i);
  for (const Source& s : sources_) root_of_.emplace(s.root, s.id);
  for (NodeId n : nodes_) {
    out_links_[n];
    in_links_[n];
    node_sources_[n];
  }
  for (const Link& l : links_) {
    if (!node_index_.count(l.parent) || !node_index_.count(l.child)) {
      structurally_usable_ = false;
      continue;
    }
    out_links_[l.parent].push_back(l.id);
    in_links_[l.child].push_back(l.id);
  }

  // Tree membership by reachability when not supplied. Every out-link of a
  // reached node is taken; validate() reports any declared mismatch.
  const bool infer = membership_.empty();
  if (infer)
    for (const Link& l : links_) membership_[l.id];

  for (const Source& s : sources_) {
    if (!node_index_.count(s.root)) {
      structurally_usable_ = false;
      continue;
    }
    auto& pmap = parent_link_[s.id];
    std::vector<NodeId> order;
    std::deque<NodeId> queue{s.root};
    std::set<NodeId> seen{s.root};
    std::size_t guard = 0;
    while (!queue.empty() && guard++ <= links_.size() + nodes_.size()) {
      NodeId u = queue.front();
      queue.pop_front();
      order.push_back(u);
      for (LinkId lid : out_links_.at(u)) {
        const Link& l = links_[link_index_.at(lid)];
        if (!infer) {
          const auto& m = membership_.at(lid);
          if (std::find(m.begin(), m.end(), s.id) == m.end()) continue;
        }
        if (infer) membership_[lid].push_back(s.id);
        if (seen.insert(l.child).second) {
          pmap[l.child] = lid;
          queue.push_back(l.child);
        } else {
          structurally_usable_ = false;  // second parent within one tree
        }
      }
    }
    tree_nodes_[s.id] = order;
    std::vector<NodeId> recv;
    for (NodeId n : order)
      if (out_links_.at(n).empty()) recv.push_back(n);
    std::sort(recv.begin(), recv.end());
    receivers_[s.id] = recv;
    for (NodeId n : order) node_sources_[n].insert(s.id);
  }
  for (auto& [lid, m] : membership_) {
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
  }
  for (NodeId n : nodes_) {
    std::vector<NodeId> ch;
    for (LinkId lid : out_links_.at(n)) ch.push_back(links_[link_index_.at(lid)].child);
    std::sort(ch.begin(), ch.end());
    children_[n] = ch;
  }

  // global parents-first order (Kahn over in-degrees)
  std::map<NodeId, int> indeg;
  for (NodeId n : nodes_) indeg[n] = static_cast<int>(in_links_.at(n).size());
  std::deque<NodeId> ready;
  for (NodeId n : nodes_)
    if (indeg[n] == 0) ready.push_back(n);
  while (!ready.empty()) {
    NodeId u = ready.front();
    ready.pop_front();
    topo_order_.push_back(u);
    for (LinkId lid : out_links_.at(u))
      if (--indeg[links_[link_index_.at(lid)].child] == 0)
        ready.push_back(links_[link_index_.at(lid)].child);
  }
  if (topo_order_.size() != nodes_.size()) structurally_usable_ = false;
}

const Link& Topology::link(LinkId l) const {
  auto it = link_index_.find(l);
  if (it == link_index_.end()) throw InputError("unknown link " + std::to_string(l));
  return links_[it->second];
}

const Source& Topology::source(SourceId s) const {
  auto it = source_index_.find(s);
  if (it == source_index_.end()) throw InputError("unknown source " + std::to_string(s));
  return sources_[it->second];
}

const std::vector<SourceId>& Topology::link_sources(LinkId l) const {
  auto it = membership_.find(l);
  if (it == membership_.end()) throw InputError("unknown link " + std::to_string(l));
  return it->second;
}

const std::set<SourceId>& Topology::node_sources(NodeId i) const {
  auto it = node_sources_.find(i);
  if (it == node_sources_.end()) throw InputError("unknown node " + std::to_string(i));
  return it->second;
}

const std::vector<LinkId>& Topology::out_links(NodeId i) const {
  auto it = out_links_.find(i);
  if (it == out_links_.end()) throw InputError("unknown node " + std::to_string(i));
  return it->second;
}

const std::vector<LinkId>& Topology::in_links(NodeId i) const {
  auto it = in_links_.find(i);
  if (it == in_links_.end()) throw InputError("unknown node " + std::to_string(i));
  return it->second;
}

bool Topology::in_tree(SourceId s, NodeId i) const {
  auto it = node_sources_.find(i);
  if (it == node_sources_.end()) throw InputError("unknown node " + std::to_string(i));
  if (!source_index_.count(s)) throw InputError("unknown source " + std::to_string(s));
  return it->second.count(s) > 0;
}

std::optional<LinkId> Topology::parent_link(SourceId s, NodeId i) const {
  auto st = parent_link_.find(s);
  if (st == parent_link_.end()) throw InputError("unknown source " + std::to_string(s));
  auto it = st->second.find(i);
  if (it == st->second.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeId> Topology::parent_node(SourceId s, NodeId i) const {
  auto l = parent_link(s, i);
  if (!l) return std::nullopt;
  return link(*l).parent;
}

const std::vector<NodeId>& Topology::children(NodeId i) const {
  auto it = children_.find(i);
  if (it == children_.end()) throw InputError("unknown node " + std::to_string(i));
  return it->second;
}

const std::vector<NodeId>& Topology::receivers(SourceId s) const {
  auto it = receivers_.find(s);
  if (it == receivers_.end()) throw InputError("unknown source " + std::to_string(s));
  return it->second;
}

const std::vector<NodeId>& Topology::tree_nodes(SourceId s) const {
  auto it = tree_nodes_.find(s);
  if (it == tree_nodes_.end()) throw InputError("unknown source " + std::to_string(s));
  return it->second;
}

LinkClass Topology::link_class(LinkId l) const {
  const Link& lk = link(l);
  if (is_source_root(lk.parent)) return LinkClass::RL;
  if (is_leaf(lk.child)) return LinkClass::AOL;
  return link_sources(l).size() > 1 ? LinkClass::SSNL : LinkClass::SBRL;
}

std::string Topology::canonical_string() const {
  std::ostringstream os;
  os << "nodes:";
  for (NodeId n : nodes_) os << n << ',';
  os << ";links:";
  for (const Link& l : links_) os << l.id << '=' << l.parent << '>' << l.child << ',';
  os << ";sources:";
  for (const Source& s : sources_) os << s.id << '@' << s.root << ',';
  os << ";membership:";
  for (const auto& [lid, m] : membership_) {
    os << lid << ':';
    for (SourceId s : m) os << s << '.';
    os << ',';
  }
  return os.str();
}

std::string Topology::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_string())));
  return buf;
}

std::vector<Violation> validate(const Topology& t) {
  std::vector<Violation> out;
  auto add = [&](std::string rule, std::string detail) {
    out.push_back({std::move(rule), std::move(detail)});
  };

  std::set<NodeId> node_ids;
  for (NodeId n : t.nodes_)
    if (!node_ids.insert(n).second) add("duplicate-node-id", "node " + std::to_string(n));
  std::set<LinkId> link_ids;
  for (const Link& l : t.links_) {
    if (!link_ids.insert(l.id).second) add("duplicate-link-id", "link " + std::to_string(l.id));
    if (!node_ids.count(l.parent) || !node_ids.count(l.child))
      add("dangling-link", "link " + std::to_string(l.id));
    else if (l.parent == l.child)
      add("self-loop", "link " + std::to_string(l.id));
  }

  std::set<SourceId> source_ids;
  std::set<NodeId> roots;
  for (const Source& s : t.sources_) {
    if (!source_ids.insert(s.id).second)
      add("duplicate-source-id", "source " + std::to_string(s.id));
    if (!node_ids.count(s.root)) {
      add("missing-root-node", "source " + std::to_string(s.id));
      continue;
    }
    if (!roots.insert(s.root).second)
      add("shared-root-node", "node " + std::to_string(s.root));
    if (!t.in_links_.at(s.root).empty())
      add("root-has-parent", "node " + std::to_string(s.root));
    if (t.out_links_.at(s.root).size() != 1)
      add("root-link-rule", "source " + std::to_string(s.id) + " root node " +
                                std::to_string(s.root) + " has " +
                                std::to_string(t.out_links_.at(s.root).size()) +
                                " children, expected 1");
  }
  if (!out.empty() && !t.structurally_usable_) return out;

  // per-source tree walk: single parent per node, no cycles
  for (const Source& s : t.sources_) {
    if (!node_ids.count(s.root)) continue;
    std::set<NodeId> seen{s.root};
    std::deque<NodeId> queue{s.root};
    std::size_t steps = 0;
    bool cyclic = false;
    while (!queue.empty()) {
      if (++steps > t.links_.size() + t.nodes_.size() + 1) {
        cyclic = true;
        break;
      }
      NodeId u = queue.front();
      queue.pop_front();
      for (LinkId lid : t.out_links_.at(u)) {
        const auto& m = t.membership_.at(lid);
        if (std::find(m.begin(), m.end(), s.id) == m.end()) continue;
        NodeId c = t.links_[t.link_index_.at(lid)].child;
        if (!seen.insert(c).second) {
          add("multi-parent-in-tree", "node " + std::to_string(c) + " in tree of source " +
                                          std::to_string(s.id));
          continue;
        }
        queue.push_back(c);
      }
    }
    if (cyclic) add("cycle", "tree of source " + std::to_string(s.id));
  }

  // every node and link must be covered by some tree
  for (NodeId n : t.nodes_)
    if (t.node_sources_.at(n).empty()) add("unreachable-node", "node " + std::to_string(n));
  for (const Link& l : t.links_)
    if (t.membership_.count(l.id) && t.membership_.at(l.id).empty())
      add("uncovered-link", "link " + std::to_string(l.id));

  // intersection closure: an out-link serves every source reaching its
  // parent node, so trees that meet share the whole subtree below the
  // meeting point (what makes beta consistent across sources)
  for (const Link& l : t.links_) {
    if (!t.membership_.count(l.id)) continue;
    const auto& m = t.membership_.at(l.id);
    const auto& su = t.node_sources_.at(l.parent);
    if (!std::equal(m.begin(), m.end(), su.begin(), su.end()))
      add("intersection-closure",
          "link " + std::to_string(l.id) + " serves a strict subset of its parent's sources");
  }
  return out;
}

std::set<NodeId> subtree_receivers(const Topology& t, SourceId s, NodeId i) {
  if (!t.in_tree(s, i))
    throw InputError("node " + std::to_string(i) + " not in tree of source " + std::to_string(s));
  std::set<NodeId> out;
  std::deque<NodeId> queue{i};
  while (!queue.empty()) {
    NodeId u = queue.front();
    queue.pop_front();
    bool leaf = true;
    for (LinkId lid : t.out_links(u)) {
      const auto& m = t.link_sources(lid);
      if (std::find(m.begin(), m.end(), s) == m.end()) continue;
      leaf = false;
      queue.push_back(t.link(lid).child);
    }
    if (leaf) out.insert(u);
  }
  return out;
}

std::vector<NodeId> ancestors(const Topology& t, SourceId s, NodeId i) {
  if (!t.in_tree(s, i))
    throw InputError("node " + std::to_string(i) + " not in tree of source " + std::to_string(s));
  std::vector<NodeId> out;
  NodeId cur = i;
  while (true) {
    auto p = t.parent_node(s, cur);
    if (!p) break;
    out.push_back(*p);
    cur = *p;
  }
  return out;
}

JointNodeSet joint_nodes(const Topology& t) {
  JointNodeSet j;
  for (NodeId n : t.nodes()) {
    j.sources_of[n] = t.node_sources(n);
    if (t.in_links(n).size() > 1) j.joint.insert(n);
  }
  return j;
}

std::vector<DecomposedTree> decompose(const Topology& t, const JointNodeSet& j) {
  std::vector<DecomposedTree> out;
  std::vector<NodeId> roots;
  for (const Source& s : t.sources()) roots.push_back(s.root);
  for (NodeId n : j.joint) roots.push_back(n);

  int id = 0;
  for (NodeId root : roots) {
    DecomposedTree piece;
    piece.tree_id = id++;
    piece.root = root;
    std::deque<NodeId> queue{root};
    while (!queue.empty()) {
      NodeId u = queue.front();
      queue.pop_front();
      for (LinkId lid : t.out_links(u)) {
        piece.links.push_back(lid);
        NodeId c = t.link(lid).child;
        if (j.joint.count(c)) {
          piece.joint_leaves.push_back(c);
        } else {
          queue.push_back(c);
        }
      }
    }
    std::sort(piece.links.begin(), piece.links.end());
    std::sort(piece.joint_leaves.begin(), piece.joint_leaves.end());
    piece.joint_leaves.erase(std::unique(piece.joint_leaves.begin(), piece.joint_leaves.end()),
                             piece.joint_leaves.end());
    piece.group = piece.joint_leaves.empty() ? TreeGroup::Descendant : TreeGroup::Ancestor;
    out.push_back(std::move(piece));
  }
  return out;
}

std::vector<SerialChain> serial_chains(const Topology& t) {
  // boundary nodes: sources, leaves, joint nodes, and branching nodes
  auto boundary = [&](NodeId n) {
    return t.is_source_root(n) || t.is_leaf(n) || t.in_links(n).size() > 1 ||
           t.out_links(n).size() > 1;
  };
  std::vector<SerialChain> out;
  for (NodeId n : t.topo_order()) {
    if (!boundary(n)) continue;
    for (LinkId lid : t.out_links(n)) {
      SerialChain chain;
      chain.top = n;
      chain.links.push_back(lid);
      NodeId cur = t.link(lid).child;
      while (!boundary(cur)) {
        LinkId next = t.out_links(cur)[0];
        chain.links.push_back(next);
        cur = t.link(next).child;
      }
      chain.bottom = cur;
      if (chain.links.size() > 1) out.push_back(std::move(chain));
    }
  }
  return out;
}

}  // namespace losstomo
