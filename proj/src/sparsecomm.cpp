#include "dsba/sparsecomm.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace dsba {

RelaySchedule build_schedule(const Graph& g) {
  const int n = g.n_nodes();
  if (n < 1) throw CommError("build_schedule: empty graph");
  RelaySchedule s;
  s.dist = all_pairs_distances(g);
  s.parent.assign(n, std::vector<NodeId>(n, -1));
  s.children.assign(n, std::vector<std::vector<NodeId>>(n));
  s.layers.resize(n);
  s.eccentricity.resize(n);
  for (NodeId o = 0; o < n; ++o) {
    const int ecc = *std::max_element(s.dist[o].begin(), s.dist[o].end());
    s.eccentricity[o] = ecc;
    s.layers[o].resize(ecc + 1);
    for (NodeId v = 0; v < n; ++v) s.layers[o][s.dist[o][v]].push_back(v);
  }
  for (NodeId origin = 0; origin < n; ++origin) {
    for (NodeId v = 0; v < n; ++v) {
      if (v == origin) continue;
      // Neighbors are sorted, so the first hit is the minimum index.
      for (NodeId u : g.neighbors(v)) {
        if (s.dist[origin][u] == s.dist[origin][v] - 1) {
          s.parent[origin][v] = u;
          s.children[origin][u].push_back(v);
          break;
        }
      }
    }
  }
  return s;
}

PacketCost packet_cost(const DeltaPacket& p) {
  return {p.payload.nnz(), p.payload.nnz() + 3};
}

DeltaPacket pack_delta(SparseVec delta, NodeId origin, long round) {
  return {origin, round, PacketKind::kDelta, std::move(delta)};
}

DeltaPacket pack_iterate(const Vec& z, NodeId origin, long round) {
  DeltaPacket p{origin, round, PacketKind::kIterate, {}};
  p.payload.idx.resize(static_cast<std::size_t>(z.size()));
  p.payload.val.resize(static_cast<std::size_t>(z.size()));
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    p.payload.idx[k] = static_cast<std::int32_t>(k);
    p.payload.val[k] = z[k];
  }
  return p;
}

CommLedger::CommLedger(int n_nodes)
    : cum_values_(n_nodes, 0), cum_meta_(n_nodes, 0), round_values_(n_nodes, 0) {}

void CommLedger::begin_round(long) {
  std::fill(round_values_.begin(), round_values_.end(), 0);
  round_sent_ = 0;
}

void CommLedger::add_receive(NodeId n, const PacketCost& c) {
  cum_values_.at(n) += c.values;
  cum_meta_.at(n) += c.metadata;
  round_values_.at(n) += c.values;
}

void CommLedger::add_send(NodeId, const PacketCost& c) { round_sent_ += c.values; }

void CommLedger::end_round() {
  ++rounds_;
  for (auto v : round_values_) peak_round_ = std::max(peak_round_, v);
  if (keep_history_) history_.push_back(round_values_);
}

std::uint64_t CommLedger::cmax_values() const {
  return cum_values_.empty() ? 0 : *std::max_element(cum_values_.begin(), cum_values_.end());
}

std::uint64_t CommLedger::cmax_metadata() const {
  return cum_meta_.empty() ? 0 : *std::max_element(cum_meta_.begin(), cum_meta_.end());
}

std::uint64_t CommLedger::round_received_values() const {
  std::uint64_t s = 0;
  for (auto v : round_values_) s += v;
  return s;
}

void account_dense_round(CommLedger& ledger, const Graph& g, int dim, long round) {
  ledger.begin_round(round);
  const PacketCost one{static_cast<std::uint64_t>(dim), 3};
  for (NodeId n = 0; n < g.n_nodes(); ++n) {
    for (NodeId m : g.neighbors(n)) {
      (void)m;
      ledger.add_receive(n, one);
      ledger.add_send(m, one);
    }
  }
  ledger.end_round();
}

std::uint64_t dense_round_ceiling(const Graph& g, int dim) {
  return static_cast<std::uint64_t>(g.max_degree()) * static_cast<std::uint64_t>(dim);
}

Network::Network(const RelaySchedule& schedule, CommLedger* ledger)
    : schedule_(&schedule), ledger_(ledger), held_(schedule.n_nodes()) {}

void Network::set_trace(std::ostream* os) {
  trace_ = os;
  if (trace_) *trace_ << "round,origin,relay,dest,nnz\n";
}

void Network::publish(DeltaPacket p) {
  const NodeId origin = p.origin;
  held_.at(origin).push_back(std::make_shared<const DeltaPacket>(std::move(p)));
}

std::vector<std::vector<PacketPtr>> Network::deliver(long round) {
  const int n = schedule_->n_nodes();
  std::vector<std::vector<PacketPtr>> inbox(n);
  if (ledger_) ledger_->begin_round(round);
  for (NodeId u = 0; u < n; ++u) {
    for (const auto& p : held_[u]) {
      const PacketCost cost = packet_cost(*p);
      for (NodeId v : schedule_->children[p->origin][u]) {
        inbox[v].push_back(p);
        if (ledger_) {
          ledger_->add_send(u, cost);
          ledger_->add_receive(v, cost);
        }
        if (trace_) *trace_ << round << ',' << p->origin << ',' << u << ',' << v << ',' << p->payload.nnz() << '\n';
        if (keep_log_) log_.push_back({round, p->origin, p->round, p->kind, u, v, p->payload.nnz()});
      }
    }
  }
  if (ledger_) ledger_->end_round();
  held_ = inbox;
  return inbox;
}

RecursionCoeffs recursion_coeffs(const MixingMatrix& m, Variant v, double alpha, double lambda,
                                 const std::vector<std::size_t>& q) {
  const auto n = m.w.rows();
  if (static_cast<Eigen::Index>(q.size()) != n) throw CommError("recursion_coeffs: one q per node expected");
  const Mat id = Mat::Identity(n, n);
  RecursionCoeffs c;
  if (v == Variant::kDsba || v == Variant::kPointSaga) {
    const double s = 1.0 + alpha * lambda;
    c.a = (2.0 * m.w_tilde + alpha * lambda * id) / s;
    c.b = m.w_tilde / s;
    c.c = alpha / s;
  } else if (v == Variant::kDsa) {
    c.a = 2.0 * m.w_tilde - alpha * lambda * id;
    c.b = m.w_tilde - alpha * lambda * id;
    c.c = alpha;
  } else {
    throw CommError("sparse communication supports dsba and dsa only");
  }
  for (auto qn : q) c.hist.push_back((static_cast<double>(qn) - 1.0) / static_cast<double>(qn));
  return c;
}

ObserverMemory::ObserverMemory(NodeId observer, const RelaySchedule& schedule, const MixingMatrix& m,
                               const RecursionCoeffs& coeffs, const Vec& z0)
    : o_(observer),
      schedule_(&schedule),
      coeffs_(&coeffs),
      w_row_(m.w.row(observer)),
      z0_(z0),
      ecc_(schedule.eccentricity.at(observer)) {
  const int n = schedule.n_nodes();
  z_lo_ = z0.transpose().replicate(n, 1);
  z_hi_ = Mat::Zero(n, z0.size());
  have_row_.assign(n, false);
  r_top_.push_back(2.0 * m.w_tilde.row(observer));
  r_bot_.push_back(-m.w_tilde.row(observer));
  for (int k = 0; k < ecc_; ++k) {
    r_top_.push_back(r_top_[k] * coeffs.a + r_bot_[k]);
    r_bot_.push_back(-r_top_[k] * coeffs.b);
  }
}

void ObserverMemory::ingest(const PacketPtr& p) {
  const int n = schedule_->n_nodes();
  if (p->origin < 0 || p->origin >= n) throw CommError("ingest: origin out of range");
  if (p->kind == PacketKind::kIterate) {
    if (p->round != 0) throw CommError("ingest: iterate packets are only sent in round 0");
    if (have_row_[p->origin])
      throw CommError("ingest: duplicate iterate from node " + std::to_string(p->origin));
    if (s_ != 1) throw CommError("ingest: late iterate packet");
    z_hi_.row(p->origin) = p->payload.to_dense(z0_.size()).transpose();
    have_row_[p->origin] = true;
    return;
  }
  auto& slot = deltas_[p->round];
  if (slot.empty()) slot.resize(n);
  if (slot[p->origin])
    throw CommError("ingest: duplicate delta from node " + std::to_string(p->origin) + " round " +
                    std::to_string(p->round));
  slot[p->origin] = p;
}

const SparseVec& ObserverMemory::delta(NodeId m, long tau) const {
  const auto it = deltas_.find(tau);
  if (it == deltas_.end() || !it->second[m])
    throw CommError("observer " + std::to_string(o_) + ": missing delta from node " + std::to_string(m) +
                    " for round " + std::to_string(tau));
  return it->second[m]->payload;
}

void ObserverMemory::add_g(double w, NodeId m, long tau, Vec& acc) const {
  if (w == 0.0) return;
  delta(m, tau - 1).axpy_into(w * coeffs_->c * coeffs_->hist[m], acc);
  delta(m, tau).axpy_into(-w * coeffs_->c, acc);
}

void ObserverMemory::advance() {
  const int n = schedule_->n_nodes();
  for (NodeId m = 0; m < n; ++m)
    if (!have_row_[m]) throw CommError("observer " + std::to_string(o_) + ": missing z^1 of node " + std::to_string(m));
  Mat next = coeffs_->a * z_hi_ - coeffs_->b * z_lo_;
  for (NodeId m = 0; m < n; ++m) {
    Vec row = Vec::Zero(next.cols());
    add_g(1.0, m, s_, row);
    next.row(m) += row.transpose();
  }
  z_lo_ = std::move(z_hi_);
  z_hi_ = std::move(next);
  ++s_;
  purge();
}

void ObserverMemory::purge() {
  while (!deltas_.empty() && deltas_.begin()->first < s_ - 1) deltas_.erase(deltas_.begin());
}

Vec ObserverMemory::mix(long t) {
  const int n = schedule_->n_nodes();
  if (t == 0) {
    NodeValues z0s(n, &z0_);
    return mix_rows(w_row_, z0s, {}, 1.0, 0.0);
  }
  if (t < s_) throw CommError("observer: round went backwards");
  while (s_ < t - ecc_) advance();
  const long k_state = t - s_;
  if (k_state > ecc_) throw CommError("observer: stored state too old");
  const auto& dist = schedule_->dist[o_];
  Vec y = Vec::Zero(z0_.size());
  for (NodeId m = 0; m < n; ++m) {
    const double top = r_top_[k_state][m], bot = r_bot_[k_state][m];
    if (top == 0.0 && bot == 0.0) continue;
    if (dist[m] > k_state + 1) throw CommError("observer: observer row outside its support");
    if (top != 0.0) {
      if (!have_row_[m]) throw CommError("observer " + std::to_string(o_) + ": z^1 of node " + std::to_string(m) +
                                         " not yet delivered at round " + std::to_string(t));
      y.noalias() += top * z_hi_.row(m).transpose();
    }
    if (bot != 0.0) y.noalias() += bot * z_lo_.row(m).transpose();
  }
  for (long k = 0; k < k_state; ++k)
    for (NodeId m = 0; m < n; ++m)
      if (dist[m] <= k + 1) add_g(r_top_[k][m], m, t - 1 - k, y);
  return y;
}

std::size_t ObserverMemory::footprint_values() const {
  std::size_t s = static_cast<std::size_t>(z_hi_.size() + z_lo_.size());
  for (const auto& [tau, slot] : deltas_)
    for (const auto& p : slot)
      if (p) s += p->payload.nnz();
  for (std::size_t k = 0; k < r_top_.size(); ++k) s += static_cast<std::size_t>(r_top_[k].size() + r_bot_[k].size());
  return s;
}

ObserverOutput observer_round(ObserverMemory& mem, const std::vector<PacketPtr>& inbox, NodeState& local,
                              const StepConfig& cfg) {
  if (mem.observer() != local.id) throw CommError("observer_round: memory belongs to another node");
  for (const auto& p : inbox) mem.ingest(p);
  const long t = local.t;
  const Vec mix = mem.mix(t);
  const std::size_t i = draw_sample(local);
  ObserverOutput out;
  if (cfg.variant == Variant::kDsa)
    out.step = dsa_node_step(local, mix, cfg.alpha, i);
  else
    out.step = dsba_node_step(local, psi_from_mix(local, mix, cfg.alpha, i), cfg.alpha, i, cfg.resolvent);
  auto own = pack_delta(out.step.delta, local.id, t);
  mem.ingest(std::make_shared<const DeltaPacket>(own));
  out.packets.push_back(std::move(own));
  if (t == 0) {
    auto it = pack_iterate(out.step.z_next, local.id, 0);
    mem.ingest(std::make_shared<const DeltaPacket>(it));
    out.packets.push_back(std::move(it));
  }
  return out;
}

SparseProtocol::SparseProtocol(const Graph& g, const MixingMatrix& m, const StepConfig& cfg,
                               const std::vector<NodeState>& nodes, const Vec& z0)
    : schedule_(build_schedule(g)),
      coeffs_([&] {
        std::vector<std::size_t> q;
        for (const auto& s : nodes) q.push_back(s.q());
        return recursion_coeffs(m, cfg.variant, cfg.alpha, nodes.empty() ? 0.0 : nodes.front().lambda, q);
      }()),
      cfg_(cfg),
      ledger_(g.n_nodes()),
      network_(schedule_, &ledger_) {
  if (static_cast<int>(nodes.size()) != g.n_nodes()) throw CommError("sparse protocol: one state per node expected");
  for (const auto& s : nodes)
    if (s.t != 0) throw CommError("sparse protocol must start at round 0");
  memories_.reserve(nodes.size());
  for (NodeId n = 0; n < g.n_nodes(); ++n) memories_.emplace_back(n, schedule_, m, coeffs_, z0);
}

void SparseProtocol::round(std::vector<NodeState>& nodes) {
  const long t = nodes.front().t;
  auto inbox = network_.deliver(t);
  std::vector<DeltaPacket> outgoing;
  for (auto& s : nodes) {
    auto out = observer_round(memories_[s.id], inbox[s.id], s, cfg_);
    for (auto& p : out.packets) outgoing.push_back(std::move(p));
  }
  for (auto& p : outgoing) network_.publish(std::move(p));
}

}  // namespace dsba
