#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace losstomo {

using NodeId = int;
using LinkId = int;
using SourceId = int;

// Thrown on malformed caller input (unknown ids, dimension mismatches, ...).
// Data-dependent conditions are never exceptions; they travel as flags.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Link {
  LinkId id = -1;
  NodeId parent = -1;
  NodeId child = -1;
};

struct Source {
  SourceId id = -1;
  NodeId root = -1;
};

struct Violation {
  std::string rule;    // stable identifier, e.g. "root-link-rule"
  std::string detail;  // names the offending node/link
};

// Link classes used by the stationarity equations and the consistency rules:
// root links, single-source non-root links, intersection non-leaf links,
// and leaf links.
enum class LinkClass { RL, SBRL, SSNL, AOL };

// A general network covered by overlapping source-rooted multicast trees.
// Immutable after construction; derived structure (per-source parent maps,
// receiver sets, tree membership) is built once. Safe for concurrent reads.
class Topology {
 public:
  Topology() = default;
  // tree_membership maps link id -> sources whose tree uses the link.
  // When empty it is inferred from reachability (every out-link of a node
  // serves all sources reaching the node).
  Topology(std::vector<NodeId> nodes, std::vector<Link> links,
           std::vector<Source> sources,
           std::map<LinkId, std::vector<SourceId>> tree_membership = {});

  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Source>& sources() const { return sources_; }

  bool has_node(NodeId i) const { return node_index_.count(i) > 0; }
  bool has_link(LinkId l) const { return link_index_.count(l) > 0; }
  bool has_source(SourceId s) const { return source_index_.count(s) > 0; }
  const Link& link(LinkId l) const;
  const Source& source(SourceId s) const;
  bool is_source_root(NodeId i) const { return root_of_.count(i) > 0; }

  // membership of a link: sources whose tree contains it (sorted)
  const std::vector<SourceId>& link_sources(LinkId l) const;
  // S(i): sources that can send probes to node i
  const std::set<SourceId>& node_sources(NodeId i) const;

  const std::vector<LinkId>& out_links(NodeId i) const;
  const std::vector<LinkId>& in_links(NodeId i) const;

  bool in_tree(SourceId s, NodeId i) const;
  // parent link of node i toward source s (nothing for the source root)
  std::optional<LinkId> parent_link(SourceId s, NodeId i) const;
  std::optional<NodeId> parent_node(SourceId s, NodeId i) const;

  // child nodes of i (shared across sources for valid topologies), sorted
  const std::vector<NodeId>& children(NodeId i) const;
  bool is_leaf(NodeId i) const { return out_links(i).empty(); }

  // R(s): receivers of s's tree, sorted
  const std::vector<NodeId>& receivers(SourceId s) const;
  // nodes of s's tree in root-first topological order (includes the root)
  const std::vector<NodeId>& tree_nodes(SourceId s) const;
  // every node, ordered so parents precede children (across all trees)
  const std::vector<NodeId>& topo_order() const { return topo_order_; }

  LinkClass link_class(LinkId l) const;

  // canonical serialized form (sorted ids); basis for the topology hash
  std::string canonical_string() const;
  std::string hash() const;

 private:
  friend std::vector<Violation> validate(const Topology&);

  std::vector<NodeId> nodes_;
  std::vector<Link> links_;
  std::vector<Source> sources_;
  std::map<LinkId, std::vector<SourceId>> membership_;

  std::map<NodeId, std::size_t> node_index_;
  std::map<LinkId, std::size_t> link_index_;
  std::map<SourceId, std::size_t> source_index_;
  std::map<NodeId, SourceId> root_of_;
  std::map<NodeId, std::vector<LinkId>> out_links_;
  std::map<NodeId, std::vector<LinkId>> in_links_;
  std::map<NodeId, std::vector<NodeId>> children_;
  std::map<NodeId, std::set<SourceId>> node_sources_;
  std::map<SourceId, std::map<NodeId, LinkId>> parent_link_;  // per-source f
  std::map<SourceId, std::vector<NodeId>> receivers_;
  std::map<SourceId, std::vector<NodeId>> tree_nodes_;
  std::vector<NodeId> topo_order_;
  bool structurally_usable_ = true;

  void build_derived();
};

// Checks every structural invariant; an empty report means the topology is
// valid. Violations are data, not faults.
std::vector<Violation> validate(const Topology& t);

// Rs(i): leaves of s's tree at or below node i.
std::set<NodeId> subtree_receivers(const Topology& t, SourceId s, NodeId i);

// a(s,i): [f(i), f2(i), ...] ending at s's root node.
std::vector<NodeId> ancestors(const Topology& t, SourceId s, NodeId i);

struct JointNodeSet {
  std::set<NodeId> joint;                           // J
  std::map<NodeId, std::set<SourceId>> sources_of;  // S(i), every node
};

// J = roots of maximal intersections (nodes with more than one parent link).
JointNodeSet joint_nodes(const Topology& t);

enum class TreeGroup { Ancestor, Descendant };

struct DecomposedTree {
  int tree_id = 0;
  TreeGroup group = TreeGroup::Descendant;
  NodeId root = -1;                  // a source root or a joint node
  std::vector<LinkId> links;         // sorted
  std::vector<NodeId> joint_leaves;  // joint nodes acting as leaves, sorted
};

// Cuts at every joint node; the pieces partition E. Ancestor-group pieces
// are the ones ending in joint-node leaves.
std::vector<DecomposedTree> decompose(const Topology& t, const JointNodeSet& j);

// Identifiable skeleton: maximal single-child chains collapsed. Chain i
// holds the links (top to bottom) between two estimable boundary nodes.
struct SerialChain {
  NodeId top = -1;     // branching node, source root, or joint node
  NodeId bottom = -1;  // next boundary below
  std::vector<LinkId> links;
};
std::vector<SerialChain> serial_chains(const Topology& t);

}  // namespace losstomo
