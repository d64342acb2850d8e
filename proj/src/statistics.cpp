#include "losstomo/statistics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace losstomo {

StatTable StatTable::build(const Topology& t, const ObservationSet& obs,
                           std::int64_t probe_begin, std::int64_t probe_end) {
  StatTable st;
  st.has_bitmaps_ = true;

  for (const auto& so : obs.per_source) {
    if (!t.has_source(so.source))
      throw InputError("observations mention unknown source " + std::to_string(so.source));
    const auto& expect = t.receivers(so.source);
    if (so.receivers != expect)
      throw InputError("receiver set mismatch for source " + std::to_string(so.source));
    for (const auto& bv : so.bits)
      if (bv.size() != so.probes)
        throw InputError("bitmap length mismatch for source " + std::to_string(so.source));

    const std::int64_t lo = std::clamp<std::int64_t>(probe_begin, 0, so.probes);
    const std::int64_t hi = probe_end < 0 ? so.probes : std::clamp(probe_end, lo, so.probes);
    st.probes_[so.source] = hi - lo;
    st.source_ids_.push_back(so.source);
    st.window_[so.source] = {lo, hi};

    // Y bits per node, bottom up over s's tree
    auto& bits = st.node_bits_[so.source];
    const auto& order = t.tree_nodes(so.source);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId v = *it;
      if (t.is_leaf(v)) {
        bits[v] = so.bits_for(v);
        continue;
      }
      BitVector acc(so.probes);
      for (NodeId c : t.children(v)) acc.or_with(bits.at(c));
      bits[v] = std::move(acc);
    }
    for (NodeId v : order) {
      if (v == t.source(so.source).root) continue;
      st.node_confirmed_[v][so.source] = static_cast<double>(bits.at(v).count_range(lo, hi));
      st.node_sources_[v].insert(so.source);
    }
  }
  std::sort(st.source_ids_.begin(), st.source_ids_.end());

  // link rows: n_l(s,1) = child-node count, n_l(s,0) against the parent
  // (n^s at root links)
  st.fill_link_rows(t);
  return st;
}

StatTable StatTable::from_counts(
    const Topology& t, const std::map<SourceId, std::int64_t>& probes,
    const std::map<std::pair<NodeId, SourceId>, double>& node_confirmed,
    const std::map<std::tuple<NodeId, SourceId, std::vector<NodeId>>, double>& joint) {
  StatTable st;
  st.has_bitmaps_ = false;
  st.probes_ = probes;
  for (const auto& [s, n] : probes) st.source_ids_.push_back(s);
  std::sort(st.source_ids_.begin(), st.source_ids_.end());
  for (const auto& [key, n1] : node_confirmed) {
    st.node_confirmed_[key.first][key.second] = n1;
    st.node_sources_[key.first].insert(key.second);
  }
  for (const auto& [key, n] : joint) {
    auto [node, src, subset] = key;
    std::vector<NodeId> sorted(subset);
    std::sort(sorted.begin(), sorted.end());
    st.joint_memo_[std::make_tuple(node, src, sorted)] = n;
  }
  st.fill_link_rows(t);
  return st;
}

void StatTable::fill_link_rows(const Topology& t) {
  link_counts_.clear();
  link_sources_.clear();
  for (const Link& l : t.links()) {
    for (SourceId s : t.link_sources(l.id)) {
      if (!probes_.count(s)) continue;
      double child_n1 = confirmed(l.child, s);
      double parent_n1 = t.is_source_root(l.parent) ? static_cast<double>(probes_.at(s))
                                                    : confirmed(l.parent, s);
      link_counts_[l.id][s] = {child_n1, parent_n1 - child_n1};
      link_sources_[l.id].push_back(s);
    }
  }
}

std::int64_t StatTable::probes_sent(SourceId s) const {
  auto it = probes_.find(s);
  if (it == probes_.end()) throw InputError("no probes recorded for source " + std::to_string(s));
  return it->second;
}

std::int64_t StatTable::probes_sent_total() const {
  std::int64_t n = 0;
  for (const auto& [s, c] : probes_) n += c;
  return n;
}

const std::set<SourceId>& StatTable::sources_at(NodeId i) const {
  static const std::set<SourceId> kEmpty;
  auto it = node_sources_.find(i);
  return it == node_sources_.end() ? kEmpty : it->second;
}

double StatTable::confirmed(NodeId i, SourceId s) const {
  auto it = node_confirmed_.find(i);
  if (it == node_confirmed_.end()) return 0;
  auto jt = it->second.find(s);
  return jt == it->second.end() ? 0 : jt->second;
}

double StatTable::confirmed_pooled(NodeId i) const {
  auto it = node_confirmed_.find(i);
  if (it == node_confirmed_.end()) return 0;
  double n = 0;
  for (const auto& [s, c] : it->second) n += c;
  return n;
}

double StatTable::confirmed_over(NodeId i, const std::set<SourceId>& sources) const {
  double n = 0;
  for (SourceId s : sources) n += confirmed(i, s);
  return n;
}

double StatTable::link_confirmed(LinkId l, SourceId s) const {
  auto it = link_counts_.find(l);
  if (it == link_counts_.end()) throw InputError("no stats for link " + std::to_string(l));
  auto jt = it->second.find(s);
  return jt == it->second.end() ? 0 : jt->second.first;
}

double StatTable::link_uncertain(LinkId l, SourceId s) const {
  auto it = link_counts_.find(l);
  if (it == link_counts_.end()) throw InputError("no stats for link " + std::to_string(l));
  auto jt = it->second.find(s);
  return jt == it->second.end() ? 0 : jt->second.second;
}

double StatTable::link_confirmed_pooled(LinkId l) const {
  double n = 0;
  auto it = link_counts_.find(l);
  if (it == link_counts_.end()) return 0;
  for (const auto& [s, c] : it->second) n += c.first;
  return n;
}

double StatTable::link_uncertain_pooled(LinkId l) const {
  double n = 0;
  auto it = link_counts_.find(l);
  if (it == link_counts_.end()) return 0;
  for (const auto& [s, c] : it->second) n += c.second;
  return n;
}

const std::vector<SourceId>& StatTable::link_source_list(LinkId l) const {
  static const std::vector<SourceId> kEmpty;
  auto it = link_sources_.find(l);
  return it == link_sources_.end() ? kEmpty : it->second;
}

double StatTable::joint_confirmed(NodeId i, SourceId s, const std::vector<NodeId>& D) const {
  if (D.empty()) throw InputError("empty child subset");
  std::vector<NodeId> key(D);
  std::sort(key.begin(), key.end());
  key.erase(std::unique(key.begin(), key.end()), key.end());
  if (key.size() == 1) return confirmed(key[0], s);
  auto memo_key = std::make_tuple(i, s, key);
  auto mit = joint_memo_.find(memo_key);
  if (mit != joint_memo_.end()) return mit->second;

  if (!has_bitmaps_)
    throw InputError("joint count for node " + std::to_string(i) +
                     " unavailable: table was imported without it");
  auto sit = node_bits_.find(s);
  if (sit == node_bits_.end()) return 0;
  std::vector<const BitVector*> vs;
  for (NodeId c : key) {
    auto bit = sit->second.find(c);
    if (bit == sit->second.end()) return 0;
    vs.push_back(&bit->second);
  }
  auto [lo, hi] = window_.at(s);
  double n = static_cast<double>(BitVector::and_count(vs, lo, hi));
  joint_memo_[memo_key] = n;
  return n;
}

double StatTable::joint_confirmed_pooled(NodeId i, const std::vector<NodeId>& D) const {
  double n = 0;
  for (SourceId s : sources_at(i)) n += joint_confirmed(i, s, D);
  return n;
}

MergedCount merge_children(const StatTable& stats, NodeId i, const std::vector<NodeId>& D) {
  if (D.empty()) throw InputError("merge_children: empty child subset");
  std::vector<NodeId> d(D);
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  if (d.size() > 20) throw InputError("merge_children: subset too large");

  MergedCount out;
  for (SourceId s : stats.sources_at(i)) {
    double n = 0;
    const std::uint32_t full = (1u << d.size()) - 1;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
      std::vector<NodeId> sub;
      for (std::size_t b = 0; b < d.size(); ++b)
        if (mask & (1u << b)) sub.push_back(d[b]);
      double term = stats.joint_confirmed(i, s, sub);
      n += (std::popcount(mask) % 2 == 1) ? term : -term;
    }
    out.per_source[s] = n;
    out.pooled += n;
  }
  return out;
}

// ---- CSV ------------------------------------------------------------------

std::string StatTable::to_csv(const Topology& t, int max_joint_children) const {
  std::ostringstream out;
  out << "type,a,b,c,d\n";
  out.precision(17);
  for (SourceId s : source_ids_) out << "probes," << s << ',' << probes_.at(s) << ",,\n";
  for (const auto& [lid, per_source] : link_counts_)
    for (const auto& [s, counts] : per_source)
      out << "link," << lid << ',' << s << ',' << counts.first << ',' << counts.second << '\n';
  // joint section: AND counts over child subsets (|D| >= 2)
  for (NodeId v : t.topo_order()) {
    const auto& ch = t.children(v);
    if (ch.size() < 2 || static_cast<int>(ch.size()) > max_joint_children) continue;
    if (!node_confirmed_.count(v)) continue;
    const std::uint32_t full = (1u << ch.size()) - 1;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
      if (std::popcount(mask) < 2) continue;
      std::vector<NodeId> sub;
      for (std::size_t b = 0; b < ch.size(); ++b)
        if (mask & (1u << b)) sub.push_back(ch[b]);
      for (SourceId s : sources_at(v)) {
        std::ostringstream key;
        for (std::size_t k = 0; k < sub.size(); ++k) key << (k ? "|" : "") << sub[k];
        out << "joint," << v << ',' << s << ',' << key.str() << ','
            << joint_confirmed(v, s, sub) << '\n';
      }
    }
  }
  return out.str();
}

StatTable StatTable::from_csv(const Topology& t, const std::string& csv_text) {
  StatTable st;
  st.has_bitmaps_ = false;
  std::istringstream in(csv_text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("type,", 0) == 0) continue;
    std::istringstream ss(line);
    std::string type, a, b, c, d;
    std::getline(ss, type, ',');
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::getline(ss, d, ',');
    if (type == "probes") {
      st.probes_[std::stoi(a)] = std::stoll(b);
      st.source_ids_.push_back(std::stoi(a));
    } else if (type == "link") {
      LinkId lid = std::stoi(a);
      SourceId s = std::stoi(b);
      st.link_counts_[lid][s] = {std::stod(c), std::stod(d)};
      st.link_sources_[lid].push_back(s);
      NodeId child = t.link(lid).child;
      st.node_confirmed_[child][s] = std::stod(c);
      st.node_sources_[child].insert(s);
    } else if (type == "joint") {
      NodeId v = std::stoi(a);
      SourceId s = std::stoi(b);
      std::vector<NodeId> sub;
      std::istringstream ks(c);
      std::string tok;
      while (std::getline(ks, tok, '|')) sub.push_back(std::stoi(tok));
      std::sort(sub.begin(), sub.end());
      st.joint_memo_[std::make_tuple(v, s, sub)] = std::stod(d);
    }
  }
  std::sort(st.source_ids_.begin(), st.source_ids_.end());
  st.source_ids_.erase(std::unique(st.source_ids_.begin(), st.source_ids_.end()),
                       st.source_ids_.end());
  return st;
}

void save_stats_csv(const StatTable& stats, const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write stats file " + path);
  out << stats.to_csv(t);
}

StatTable load_stats_csv(const Topology& t, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open stats file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return StatTable::from_csv(t, ss.str());
}

}  // namespace losstomo
