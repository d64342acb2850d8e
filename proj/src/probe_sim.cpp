#include "losstomo/probe_sim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace losstomo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void check_loss_model(const Topology& t, const LossModel& loss) {
  for (const Link& l : t.links()) {
    double th = loss.theta(l.id);
    if (!(th >= 0.0 && th <= 1.0))
      throw InputError("loss probability of link " + std::to_string(l.id) +
                       " outside [0,1]: " + std::to_string(th));
  }
}

// links of s's tree, parents first
std::vector<LinkId> tree_links_in_order(const Topology& t, SourceId s) {
  std::vector<LinkId> order;
  for (NodeId n : t.tree_nodes(s))
    for (LinkId lid : t.out_links(n)) {
      const auto& m = t.link_sources(lid);
      if (std::find(m.begin(), m.end(), s) != m.end()) order.push_back(lid);
    }
  return order;
}

}  // namespace

const BitVector& SourceObservations::bits_for(NodeId receiver) const {
  auto it = std::lower_bound(receivers.begin(), receivers.end(), receiver);
  if (it == receivers.end() || *it != receiver)
    throw InputError("node " + std::to_string(receiver) + " is not a receiver here");
  return bits[static_cast<std::size_t>(it - receivers.begin())];
}

const SourceObservations& ObservationSet::for_source(SourceId s) const {
  for (const auto& so : per_source)
    if (so.source == s) return so;
  throw InputError("no observations for source " + std::to_string(s));
}

bool ObservationSet::has_source(SourceId s) const {
  for (const auto& so : per_source)
    if (so.source == s) return true;
  return false;
}

bool link_pass_draw(std::uint64_t seed, SourceId s, std::int64_t probe, LinkId link,
                    double theta) {
  std::uint64_t k = splitmix64(seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(
                                           static_cast<std::uint32_t>(s) + 0x7f4a7c15u)));
  k = splitmix64(k + static_cast<std::uint64_t>(probe));
  k = splitmix64(k + static_cast<std::uint64_t>(static_cast<std::uint32_t>(link)) *
                         0x632be59bd9b4e019ull);
  double u = static_cast<double>(k >> 11) * 0x1.0p-53;
  return u >= theta;
}

ObservationSet simulate(const Topology& t, const LossModel& loss,
                        const std::map<SourceId, std::int64_t>& probe_counts,
                        std::uint64_t seed) {
  check_loss_model(t, loss);
  for (const auto& [s, n] : probe_counts) {
    t.source(s);
    if (n < 0) throw InputError("negative probe count for source " + std::to_string(s));
  }

  ObservationSet obs;
  obs.seed = seed;
  obs.topology_hash = t.hash();
  for (const Source& src : t.sources()) {
    auto cit = probe_counts.find(src.id);
    if (cit == probe_counts.end()) continue;
    const std::int64_t n = cit->second;

    SourceObservations so;
    so.source = src.id;
    so.probes = n;
    so.receivers = t.receivers(src.id);
    so.bits.assign(so.receivers.size(), BitVector(n));

    const std::vector<LinkId> link_order = tree_links_in_order(t, src.id);
    std::vector<double> theta(link_order.size());
    for (std::size_t i = 0; i < link_order.size(); ++i) theta[i] = loss.theta(link_order[i]);

    std::map<NodeId, bool> reached;
    for (std::int64_t o = 0; o < n; ++o) {
      reached.clear();
      reached[src.root] = true;
      for (std::size_t i = 0; i < link_order.size(); ++i) {
        const Link& l = t.link(link_order[i]);
        bool at_parent = reached[l.parent];
        bool pass = link_pass_draw(seed, src.id, o, l.id, theta[i]);
        reached[l.child] = at_parent && pass;
      }
      for (std::size_t r = 0; r < so.receivers.size(); ++r)
        if (reached[so.receivers[r]]) so.bits[r].set(o);
    }
    obs.per_source.push_back(std::move(so));
  }
  return obs;
}

std::map<LinkId, LinkTally> ground_truth_tally(
    const Topology& t, const LossModel& loss,
    const std::map<SourceId, std::int64_t>& probe_counts, std::uint64_t seed,
    std::int64_t probe_begin, std::int64_t probe_end) {
  check_loss_model(t, loss);
  std::map<LinkId, LinkTally> tally;
  for (const Link& l : t.links()) tally[l.id];

  for (const Source& src : t.sources()) {
    auto cit = probe_counts.find(src.id);
    if (cit == probe_counts.end()) continue;
    const std::int64_t n = cit->second;
    const std::int64_t lo = std::max<std::int64_t>(0, probe_begin);
    const std::int64_t hi = probe_end < 0 ? n : std::min(n, probe_end);

    const std::vector<LinkId> link_order = tree_links_in_order(t, src.id);
    std::map<NodeId, bool> reached;
    for (std::int64_t o = lo; o < hi; ++o) {
      reached.clear();
      reached[src.root] = true;
      for (LinkId lid : link_order) {
        const Link& l = t.link(lid);
        bool at_parent = reached[l.parent];
        bool pass = link_pass_draw(seed, src.id, o, lid, loss.theta(lid));
        if (at_parent) {
          LinkTally& lt = tally[lid];
          lt.attempts++;
          if (!pass) lt.losses++;
        }
        reached[l.child] = at_parent && pass;
      }
    }
  }
  return tally;
}

// ---- file formats -------------------------------------------------------

namespace {
constexpr char kTraceMagic[] = "LTOBS1";
}

void save_trace(const ObservationSet& obs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write trace file " + path);
  nlohmann::json hdr;
  hdr["seed"] = obs.seed;
  hdr["topology"] = obs.topology_hash;
  auto& srcs = hdr["sources"] = nlohmann::json::array();
  for (const auto& so : obs.per_source)
    srcs.push_back({{"source", so.source}, {"probes", so.probes}, {"receivers", so.receivers}});
  std::string h = hdr.dump();
  out << kTraceMagic << '\n' << h << '\n';
  for (const auto& so : obs.per_source)
    for (const auto& bv : so.bits)
      out.write(reinterpret_cast<const char*>(bv.words().data()),
                static_cast<std::streamsize>(bv.words().size() * sizeof(std::uint64_t)));
}

ObservationSet load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open trace file " + path);
  std::string magic, hdr_line;
  std::getline(in, magic);
  if (magic != kTraceMagic) throw InputError("not a trace file: " + path);
  std::getline(in, hdr_line);
  nlohmann::json hdr = nlohmann::json::parse(hdr_line, nullptr, false);
  if (hdr.is_discarded()) throw InputError("corrupt trace header: " + path);

  ObservationSet obs;
  obs.seed = hdr.at("seed").get<std::uint64_t>();
  obs.topology_hash = hdr.at("topology").get<std::string>();
  for (const auto& js : hdr.at("sources")) {
    SourceObservations so;
    so.source = js.at("source").get<SourceId>();
    so.probes = js.at("probes").get<std::int64_t>();
    so.receivers = js.at("receivers").get<std::vector<NodeId>>();
    so.bits.assign(so.receivers.size(), BitVector(so.probes));
    for (auto& bv : so.bits)
      in.read(reinterpret_cast<char*>(bv.words().data()),
              static_cast<std::streamsize>(bv.words().size() * sizeof(std::uint64_t)));
    if (!in) throw InputError("truncated trace file: " + path);
    obs.per_source.push_back(std::move(so));
  }
  return obs;
}

void save_trace_csv(const ObservationSet& obs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trace file " + path);
  out << "# seed " << obs.seed << '\n';
  out << "# topology " << obs.topology_hash << '\n';
  for (const auto& so : obs.per_source) out << "# probes " << so.source << ' ' << so.probes << '\n';
  out << "source,probe,receiver,bit\n";
  for (const auto& so : obs.per_source)
    for (std::int64_t o = 0; o < so.probes; ++o)
      for (std::size_t r = 0; r < so.receivers.size(); ++r)
        out << so.source << ',' << o << ',' << so.receivers[r] << ',' << (so.bits[r].get(o) ? 1 : 0)
            << '\n';
}

ObservationSet load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace file " + path);
  ObservationSet obs;
  std::map<SourceId, std::int64_t> probes;
  std::string line;
  std::vector<std::string> data_lines;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      ss >> key;
      if (key == "seed")
        ss >> obs.seed;
      else if (key == "topology")
        ss >> obs.topology_hash;
      else if (key == "probes") {
        SourceId s;
        std::int64_t n;
        ss >> s >> n;
        probes[s] = n;
      }
      continue;
    }
    if (line.rfind("source,", 0) == 0) continue;
    data_lines.push_back(line);
  }
  std::map<SourceId, std::map<NodeId, std::vector<std::pair<std::int64_t, bool>>>> cells;
  for (const std::string& dl : data_lines) {
    std::istringstream ss(dl);
    std::string tok;
    int vals[4] = {0, 0, 0, 0};
    std::int64_t probe = 0;
    for (int i = 0; i < 4 && std::getline(ss, tok, ','); ++i) {
      if (i == 1)
        probe = std::stoll(tok);
      else
        vals[i] = std::stoi(tok);
    }
    cells[vals[0]][vals[2]].push_back({probe, vals[3] != 0});
  }
  for (const auto& [s, rows] : cells) {
    SourceObservations so;
    so.source = s;
    so.probes = probes.count(s) ? probes[s] : 0;
    for (const auto& [recv, seq] : rows) {
      so.receivers.push_back(recv);
      BitVector bv(so.probes);
      for (auto [o, b] : seq)
        if (b) bv.set(o);
      so.bits.push_back(std::move(bv));
    }
    obs.per_source.push_back(std::move(so));
  }
  return obs;
}

void save_tally_csv(const std::map<LinkId, LinkTally>& tally, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write tally file " + path);
  out << "link,attempts,losses,passes\n";
  for (const auto& [lid, lt] : tally)
    out << lid << ',' << lt.attempts << ',' << lt.losses << ',' << lt.passes() << '\n';
}

std::map<LinkId, LinkTally> load_tally_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open tally file " + path);
  std::map<LinkId, LinkTally> tally;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("link,", 0) == 0) continue;
    std::istringstream ss(line);
    std::string tok;
    LinkId lid = -1;
    LinkTally lt;
    if (std::getline(ss, tok, ',')) lid = std::stoi(tok);
    if (std::getline(ss, tok, ',')) lt.attempts = std::stoll(tok);
    if (std::getline(ss, tok, ',')) lt.losses = std::stoll(tok);
    tally[lid] = lt;
  }
  return tally;
}

LossModel load_loss_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open loss file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad loss file: ") + e.what());
  }
  LossModel loss;
  loss.default_theta = j.value("default_theta", 0.0);
  if (j.contains("overrides"))
    for (const auto& [k, v] : j.at("overrides").items())
      loss.overrides[std::stoi(k)] = v.get<double>();
  return loss;
}

void save_loss_file(const LossModel& loss, const std::string& path) {
  nlohmann::json j;
  j["default_theta"] = loss.default_theta;
  nlohmann::json o = nlohmann::json::object();
  for (const auto& [k, v] : loss.overrides) o[std::to_string(k)] = v;
  j["overrides"] = o;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write loss file " + path);
  out << j.dump(2) << '\n';
}

}  // namespace losstomo
