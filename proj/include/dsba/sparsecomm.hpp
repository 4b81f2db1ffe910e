#ifndef DSBA_SPARSECOMM_HPP
#define DSBA_SPARSECOMM_HPP

#include "dsba/algorithms.hpp"
#include "dsba/topology.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dsba {

class CommError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest-path relay trees, one per origin. A node's parent towards origin n
// is its minimum-index neighbor one hop closer to n, so every packet reaches
// every node exactly once, dist(n, v) rounds after it was produced.
struct RelaySchedule {
  std::vector<std::vector<int>> dist;                       // dist[a][b]
  std::vector<std::vector<NodeId>> parent;                  // parent[origin][v], -1 at origin
  std::vector<std::vector<std::vector<NodeId>>> children;   // children[origin][u]
  std::vector<std::vector<std::vector<NodeId>>> layers;     // layers[o][j] = {n : dist(o, n) = j}
  std::vector<int> eccentricity;

  int n_nodes() const { return static_cast<int>(dist.size()); }
  // Neighbor of `observer` that hands it packets from `origin`.
  NodeId forwarder(NodeId observer, NodeId origin) const { return parent.at(origin).at(observer); }
};

RelaySchedule build_schedule(const Graph& g);

enum class PacketKind { kDelta, kIterate };

struct DeltaPacket {
  NodeId origin = 0;
  long round = 0;
  PacketKind kind = PacketKind::kDelta;
  SparseVec payload;
};

using PacketPtr = std::shared_ptr<const DeltaPacket>;

struct PacketCost {
  std::uint64_t values = 0;    // payload doubles
  std::uint64_t metadata = 0;  // one index per value plus origin, round and kind
};

PacketCost packet_cost(const DeltaPacket& p);
DeltaPacket pack_delta(SparseVec delta, NodeId origin, long round);
// Dense z^1 relay used once during warm-up.
DeltaPacket pack_iterate(const Vec& z, NodeId origin, long round);

// Received and sent counts per node; C_max is the max over nodes of the
// cumulative received payload values.
class CommLedger {
 public:
  explicit CommLedger(int n_nodes = 0);

  void begin_round(long round);
  void add_receive(NodeId n, const PacketCost& c);
  void add_send(NodeId n, const PacketCost& c);
  void end_round();

  long rounds() const { return rounds_; }
  std::uint64_t cmax_values() const;
  std::uint64_t cmax_metadata() const;
  const std::vector<std::uint64_t>& cumulative_values() const { return cum_values_; }
  const std::vector<std::uint64_t>& round_values() const { return round_values_; }
  std::uint64_t round_sent_values() const { return round_sent_; }
  std::uint64_t round_received_values() const;
  // Largest single-round receipt at any node over the whole run.
  std::uint64_t peak_round_values() const { return peak_round_; }
  // Per-round per-node receipts, kept when history is enabled.
  void keep_history(bool on) { keep_history_ = on; }
  const std::vector<std::vector<std::uint64_t>>& history() const { return history_; }

 private:
  long rounds_ = 0;
  std::vector<std::uint64_t> cum_values_, cum_meta_, round_values_;
  std::uint64_t round_sent_ = 0;
  std::uint64_t peak_round_ = 0;
  bool keep_history_ = false;
  std::vector<std::vector<std::uint64_t>> history_;
};

// Dense gather: every node receives d values from each neighbor per round.
void account_dense_round(CommLedger& ledger, const Graph& g, int dim, long round);

// Max-degree dense cost per round, for comparison.
std::uint64_t dense_round_ceiling(const Graph& g, int dim);

struct Delivery {
  long round = 0;  // arrival round
  NodeId origin = 0;
  long packet_round = 0;
  PacketKind kind = PacketKind::kDelta;
  NodeId relay = 0;
  NodeId dest = 0;
  std::size_t nnz = 0;
};

// Synchronous lossless relay network. Packets published at the end of round
// t are delivered to distance-1 nodes at round t + 1, and so on.
class Network {
 public:
  Network(const RelaySchedule& schedule, CommLedger* ledger);

  void publish(DeltaPacket p);
  // Moves every held packet one hop and returns the per-node inboxes of `round`.
  std::vector<std::vector<PacketPtr>> deliver(long round);

  void set_trace(std::ostream* os);
  void keep_log(bool on) { keep_log_ = on; }
  const std::vector<Delivery>& log() const { return log_; }

 private:
  const RelaySchedule* schedule_;
  CommLedger* ledger_;
  std::vector<std::vector<PacketPtr>> held_;
  std::ostream* trace_ = nullptr;
  bool keep_log_ = false;
  std::vector<Delivery> log_;
};

// Linear recursion Z^{s+1} = A Z^s - B Z^{s-1} + G^s followed by the stochastic
// variants for s >= 1, with G^s_m = c (k_m delta_m^{s-1} - delta_m^s).
struct RecursionCoeffs {
  Mat a;
  Mat b;
  double c = 0.0;
  std::vector<double> hist;  // (q_m - 1) / q_m
};

RecursionCoeffs recursion_coeffs(const MixingMatrix& m, Variant v, double alpha, double lambda,
                                 const std::vector<std::size_t>& q);

// What one node keeps to rebuild its mixing term from delayed sparse deltas:
// a full delayed pair (Z^s, Z^{s-1}), the delta log since s - 1, and the
// observer rows R_k = r T^k of the state transition.
class ObserverMemory {
 public:
  ObserverMemory(NodeId observer, const RelaySchedule& schedule, const MixingMatrix& m,
                 const RecursionCoeffs& coeffs, const Vec& z0);

  NodeId observer() const { return o_; }
  long stored_round() const { return s_; }

  // Takes one delivered packet; throws on duplicates.
  void ingest(const PacketPtr& p);

  // [W z^0]_o at t = 0, [Wt (2 Z^t - Z^{t-1})]_o after.
  Vec mix(long t);

  // Stored doubles: delayed pair, delta log payloads and observer rows.
  std::size_t footprint_values() const;

 private:
  const SparseVec& delta(NodeId m, long tau) const;
  void advance();
  void purge();
  void add_g(double w, NodeId m, long tau, Vec& acc) const;

  NodeId o_;
  const RelaySchedule* schedule_;
  const RecursionCoeffs* coeffs_;
  Eigen::RowVectorXd w_row_;
  Vec z0_;
  int ecc_;
  long s_ = 1;
  Mat z_hi_, z_lo_;  // Z^s, Z^{s-1}
  std::vector<bool> have_row_;
  std::vector<Eigen::RowVectorXd> r_top_, r_bot_;
  std::map<long, std::vector<PacketPtr>> deltas_;
};

struct ObserverOutput {
  StepResult step;
  std::vector<DeltaPacket> packets;
};

// One round at one node: ingest the inbox, rebuild the mixing term, take the
// local step and emit this round's packets.
ObserverOutput observer_round(ObserverMemory& mem, const std::vector<PacketPtr>& inbox, NodeState& local,
                              const StepConfig& cfg);

// All nodes running the sparse protocol over one relay network.
class SparseProtocol {
 public:
  SparseProtocol(const Graph& g, const MixingMatrix& m, const StepConfig& cfg, const std::vector<NodeState>& nodes,
                 const Vec& z0);
  SparseProtocol(const SparseProtocol&) = delete;
  SparseProtocol& operator=(const SparseProtocol&) = delete;

  void round(std::vector<NodeState>& nodes);

  const RelaySchedule& schedule() const { return schedule_; }
  CommLedger& ledger() { return ledger_; }
  const CommLedger& ledger() const { return ledger_; }
  Network& network() { return network_; }
  const ObserverMemory& memory(NodeId n) const { return memories_.at(n); }

 private:
  RelaySchedule schedule_;
  RecursionCoeffs coeffs_;
  StepConfig cfg_;
  CommLedger ledger_;
  Network network_;
  std::vector<ObserverMemory> memories_;
};

}  // namespace dsba

#endif  // DSBA_SPARSECOMM_HPP
