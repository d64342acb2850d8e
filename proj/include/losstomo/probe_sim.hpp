#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "losstomo/bitvector.hpp"
#include "losstomo/topology.hpp"

namespace losstomo {

// Bernoulli per-link loss model. theta is the loss probability of a link.
struct LossModel {
  double default_theta = 0.0;
  std::map<LinkId, double> overrides;

  double theta(LinkId l) const {
    auto it = overrides.find(l);
    return it == overrides.end() ? default_theta : it->second;
  }
  double pass(LinkId l) const { return 1.0 - theta(l); }
};

struct SourceObservations {
  SourceId source = -1;
  std::int64_t probes = 0;
  std::vector<NodeId> receivers;  // sorted; R(s)
  std::vector<BitVector> bits;    // parallel to receivers; bit o = X_r^s(o)

  const BitVector& bits_for(NodeId receiver) const;
};

// End-to-end pass/loss bitmaps, the data set for inference.
struct ObservationSet {
  std::uint64_t seed = 0;
  std::string topology_hash;
  std::vector<SourceObservations> per_source;  // sorted by source id

  const SourceObservations& for_source(SourceId s) const;
  bool has_source(SourceId s) const;
};

// One coin per (seed, source, probe, link), counter based: random access,
// independent across probes and links, and order independent. Probes from
// different sources never share a draw, even on shared links.
bool link_pass_draw(std::uint64_t seed, SourceId s, std::int64_t probe, LinkId link,
                    double theta);

// Sends probe_counts[s] probes from each source through its multicast tree
// with independent Bernoulli losses; X_r = 1 iff every link on the path
// passed. Identical inputs give a byte-identical ObservationSet.
ObservationSet simulate(const Topology& t, const LossModel& loss,
                        const std::map<SourceId, std::int64_t>& probe_counts,
                        std::uint64_t seed);

struct LinkTally {
  std::int64_t attempts = 0;  // probes that reached the link's parent node
  std::int64_t losses = 0;
  std::int64_t passes() const { return attempts - losses; }
};

// Per-link loss/pass accounting of the same deterministic draws, the
// "actual loss rate" side of the relative-error metric. Only transits whose
// probe actually reached the link's parent are counted; shared links pool
// the probes of all their sources.
std::map<LinkId, LinkTally> ground_truth_tally(
    const Topology& t, const LossModel& loss,
    const std::map<SourceId, std::int64_t>& probe_counts, std::uint64_t seed,
    std::int64_t probe_begin = 0, std::int64_t probe_end = -1);

// Trace files: packed binary form and the equivalent CSV form.
void save_trace(const ObservationSet& obs, const std::string& path);
ObservationSet load_trace(const std::string& path);
void save_trace_csv(const ObservationSet& obs, const std::string& path);
ObservationSet load_trace_csv(const std::string& path);

void save_tally_csv(const std::map<LinkId, LinkTally>& tally, const std::string& path);
std::map<LinkId, LinkTally> load_tally_csv(const std::string& path);

// Loss model file: {"default_theta": 0.01, "overrides": {"21": 0.10}}
LossModel load_loss_file(const std::string& path);
void save_loss_file(const LossModel& loss, const std::string& path);

}  // namespace losstomo
