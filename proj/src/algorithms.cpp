#include "dsba/algorithms.hpp"

#include <algorithm>

namespace dsba {

namespace {

SparseVec drop_zeros(SparseVec v) {
  SparseVec out;
  for (std::size_t k = 0; k < v.nnz(); ++k)
    if (v.val[k] != 0.0) out.push(v.idx[k], v.val[k]);
  return out;
}

double history_weight(const NodeState& s) {
  const double q = static_cast<double>(s.q());
  return (q - 1.0) / q;
}

void advance(NodeState& s, Vec z_next, SparseVec delta) {
  s.z_prev = std::move(s.z_curr);
  s.z_curr = std::move(z_next);
  s.delta_prev = std::move(delta);
  ++s.t;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "dsba") return Variant::kDsba;
  if (name == "dsa") return Variant::kDsa;
  if (name == "extra") return Variant::kExtra;
  if (name == "pointsaga") return Variant::kPointSaga;
  throw AlgorithmError("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kDsba: return "dsba";
    case Variant::kDsa: return "dsa";
    case Variant::kExtra: return "extra";
    case Variant::kPointSaga: return "pointsaga";
  }
  return "?";
}

PhiTable::PhiTable(const Shard& ops, const Vec& z0) : ops_(&ops) {
  if (ops.empty()) throw AlgorithmError("phi table: empty shard");
  entries_.reserve(ops.size());
  for (const auto& op : ops) entries_.push_back(op.value(z0));
  mean_ = exact_mean();
}

ComponentValue PhiTable::replace(std::size_t i, const ComponentValue& v) {
  const ComponentValue d = v - entries_.at(i);
  entries_[i] = v;
  (*ops_)[i].add_scaled(d, 1.0 / static_cast<double>(size()), mean_);
  if (++since_recompute_ >= size()) {
    mean_ = exact_mean();
    since_recompute_ = 0;
  }
  return d;
}

Vec PhiTable::exact_mean() const {
  Vec m = Vec::Zero((*ops_)[0].dim());
  for (std::size_t i = 0; i < entries_.size(); ++i) (*ops_)[i].add_scaled(entries_[i], 1.0, m);
  return m / static_cast<double>(size());
}

std::mt19937_64 node_stream(std::uint64_t master_seed, int node) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(node), 0x5a4dU};
  return std::mt19937_64(seq);
}

NodeState init_node(const Shard& shard, const Vec& z0, double lambda, int node_id, std::uint64_t master_seed) {
  if (shard.empty()) throw AlgorithmError("init_node: node " + std::to_string(node_id) + " has an empty shard");
  if (z0.size() != shard.front().dim()) throw AlgorithmError("init_node: z0 has the wrong dimension");
  if (lambda < 0.0) throw AlgorithmError("init_node: lambda must be non-negative");
  NodeState s;
  s.id = node_id;
  s.ops = &shard;
  s.lambda = lambda;
  s.z_curr = z0;
  s.z_prev = z0;
  s.table = PhiTable(shard, z0);
  s.counters.evals = shard.size();
  s.rng = node_stream(master_seed, node_id);
  return s;
}

std::size_t draw_sample(NodeState& s) {
  std::uniform_int_distribution<std::size_t> pick(0, s.q() - 1);
  return pick(s.rng);
}

Vec mix_rows(const Eigen::RowVectorXd& row, const NodeValues& a, const NodeValues& b, double c1, double c2) {
  if (static_cast<std::size_t>(row.size()) != a.size()) throw AlgorithmError("mix: row length mismatch");
  Eigen::Index dim = -1;
  for (const Vec* v : a)
    if (v) {
      dim = v->size();
      break;
    }
  if (dim < 0) throw AlgorithmError("mix: no neighbor values");
  Vec acc = Vec::Zero(dim);
  for (std::size_t m = 0; m < a.size(); ++m) {
    const double w = row[static_cast<Eigen::Index>(m)];
    if (w == 0.0) continue;
    if (!a[m] || (c2 != 0.0 && (m >= b.size() || !b[m])))
      throw AlgorithmError("mix: missing value from node " + std::to_string(m));
    if (a[m]->size() != dim) throw AlgorithmError("mix: dimension mismatch at node " + std::to_string(m));
    if (c2 == 0.0)
      acc.noalias() += w * (c1 * *a[m]);
    else
      acc.noalias() += w * (c1 * *a[m] + c2 * *b[m]);
  }
  return acc;
}

Vec psi_from_mix(const NodeState& s, const Vec& mix, double alpha, std::size_t i) {
  if (mix.size() != s.dim()) throw AlgorithmError("psi: dimension mismatch");
  Vec psi = mix;
  if (s.t == 0) {
    psi.noalias() -= alpha * s.table.mean();
  } else {
    psi.noalias() += (alpha * s.lambda) * s.z_curr;
    s.delta_prev.axpy_into(alpha * history_weight(s), psi);
  }
  (*s.ops)[i].add_scaled(s.table.entry(i), alpha, psi);
  return psi;
}

Vec compute_psi_initial(const NodeState& s, const NodeValues& neighbor_z, const Eigen::RowVectorXd& w_row,
                        double alpha, std::size_t i) {
  if (s.t != 0) throw AlgorithmError("compute_psi_initial: only valid at t = 0");
  return psi_from_mix(s, mix_rows(w_row, neighbor_z, {}, 1.0, 0.0), alpha, i);
}

Vec compute_psi(const NodeState& s, const NodeValues& neighbor_z_curr, const NodeValues& neighbor_z_prev,
                const Eigen::RowVectorXd& wt_row, double alpha, std::size_t i) {
  if (s.t < 1) throw AlgorithmError("compute_psi: needs t >= 1");
  return psi_from_mix(s, mix_rows(wt_row, neighbor_z_curr, neighbor_z_prev, 2.0, -1.0), alpha, i);
}

StepResult dsba_node_step(NodeState& s, const Vec& psi, double alpha, std::size_t i, const ResolventOptions& opts) {
  if (!(alpha > 0.0)) throw AlgorithmError("dsba step: alpha must be positive");
  const Operator& op = (*s.ops).at(i);
  StepResult r;
  r.z_next = op.resolvent_l2(alpha, s.lambda, psi, opts);
  const ComponentValue d = s.table.replace(i, op.value(r.z_next));
  r.delta = drop_zeros(op.expand(d));
  ++s.counters.resolves;
  ++s.counters.evals;
  advance(s, r.z_next, r.delta);
  return r;
}

StepResult dsa_node_step(NodeState& s, const Vec& mix, double alpha, std::size_t i) {
  if (!(alpha > 0.0)) throw AlgorithmError("dsa step: alpha must be positive");
  if (mix.size() != s.dim()) throw AlgorithmError("dsa step: dimension mismatch");
  const Operator& op = (*s.ops).at(i);
  const ComponentValue v = op.value(s.z_curr);
  ++s.counters.evals;
  StepResult r;
  r.delta = drop_zeros(op.expand(v - s.table.entry(i)));
  r.z_next = mix;
  if (s.t == 0) {
    r.z_next.noalias() -= alpha * (s.table.mean() + s.lambda * s.z_curr);
    r.delta.axpy_into(-alpha, r.z_next);
  } else {
    r.z_next.noalias() -= (alpha * s.lambda) * (s.z_curr - s.z_prev);
    s.delta_prev.axpy_into(alpha * history_weight(s), r.z_next);
    r.delta.axpy_into(-alpha, r.z_next);
  }
  s.table.replace(i, v);
  advance(s, r.z_next, r.delta);
  return r;
}

Vec dense_mix(const MixingMatrix& m, int node, long t, const NodeValues& z_curr, const NodeValues& z_prev) {
  if (t == 0) return mix_rows(m.w.row(node), z_curr, {}, 1.0, 0.0);
  return mix_rows(m.w_tilde.row(node), z_curr, z_prev, 2.0, -1.0);
}

void stochastic_round(std::vector<NodeState>& nodes, const MixingMatrix& m, const StepConfig& cfg) {
  if (cfg.variant != Variant::kDsba && cfg.variant != Variant::kDsa && cfg.variant != Variant::kPointSaga)
    throw AlgorithmError("stochastic_round: variant " + to_string(cfg.variant) + " is not stochastic");
  std::vector<Vec> zc, zp;
  zc.reserve(nodes.size());
  zp.reserve(nodes.size());
  for (const auto& n : nodes) {
    zc.push_back(n.z_curr);
    zp.push_back(n.z_prev);
  }
  NodeValues pc, pp;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    pc.push_back(&zc[k]);
    pp.push_back(&zp[k]);
  }
  for (auto& n : nodes) {
    const std::size_t i = draw_sample(n);
    const Vec mix = dense_mix(m, n.id, n.t, pc, pp);
    if (cfg.variant == Variant::kDsa)
      dsa_node_step(n, mix, cfg.alpha, i);
    else
      dsba_node_step(n, psi_from_mix(n, mix, cfg.alpha, i), cfg.alpha, i, cfg.resolvent);
  }
}

Vec local_operator(const Shard& ops, const Vec& z, double lambda) {
  if (ops.empty()) throw AlgorithmError("local_operator: empty shard");
  Vec out = Vec::Zero(z.size());
  for (const auto& op : ops) op.add_scaled(op.value(z), 1.0, out);
  out /= static_cast<double>(ops.size());
  out.noalias() += lambda * z;
  return out;
}

void extra_round(std::vector<NodeState>& nodes, const Mat& w, const Mat& w_tilde, double alpha) {
  if (!(alpha >= 0.0)) throw AlgorithmError("extra: alpha must be non-negative");
  const auto n = static_cast<Eigen::Index>(nodes.size());
  if (w.rows() != n || w_tilde.rows() != n) throw AlgorithmError("extra: mixing matrix size mismatch");
  std::vector<Vec> zc, zp;
  NodeValues pc, pp;
  for (const auto& s : nodes) {
    zc.push_back(s.z_curr);
    zp.push_back(s.z_prev);
  }
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    pc.push_back(&zc[k]);
    pp.push_back(&zp[k]);
  }
  for (auto& s : nodes) {
    Vec g = local_operator(*s.ops, s.z_curr, s.lambda);
    s.counters.evals += s.q();
    Vec z_next;
    if (s.t == 0) {
      z_next = mix_rows(w.row(s.id), pc, {}, 1.0, 0.0);
      z_next.noalias() -= alpha * g;
    } else {
      z_next = mix_rows(w_tilde.row(s.id), pc, pp, 2.0, -1.0);
      z_next.noalias() -= alpha * (g - s.grad_prev);
    }
    s.grad_prev = std::move(g);
    advance(s, std::move(z_next), {});
  }
}

Vec pointsaga_step(std::vector<NodeState>& nodes, double alpha, std::size_t i, const ResolventOptions& opts) {
  if (nodes.size() != 1) throw AlgorithmError("pointsaga_step: needs exactly one node, got " + std::to_string(nodes.size()));
  NodeState& s = nodes.front();
  const Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
  const NodeValues zc{&s.z_curr}, zp{&s.z_prev};
  const Vec mix = s.t == 0 ? mix_rows(one, zc, {}, 1.0, 0.0) : mix_rows(one, zc, zp, 2.0, -1.0);
  return dsba_node_step(s, psi_from_mix(s, mix, alpha, i), alpha, i, opts).z_next;
}

Vec pointsaga_classic_step(NodeState& s, double alpha, std::size_t i, const ResolventOptions& opts) {
  const Operator& op = (*s.ops).at(i);
  Vec psi = s.z_curr;
  op.add_scaled(s.table.entry(i), alpha, psi);
  psi.noalias() -= alpha * s.table.mean();
  Vec z_next = op.resolvent_l2(alpha, s.lambda, psi, opts);
  const ComponentValue d = s.table.replace(i, op.value(z_next));
  ++s.counters.resolves;
  ++s.counters.evals;
  advance(s, z_next, drop_zeros(op.expand(d)));
  return z_next;
}

double step_size_bound(double lipschitz) {
  if (!(lipschitz > 0.0)) throw AlgorithmError("step_size_bound: L must be positive");
  return 1.0 / (24.0 * lipschitz);
}

double shard_lipschitz(const std::vector<Shard>& shards, double lambda) {
  double l = 0.0;
  for (const auto& shard : shards)
    for (const auto& op : shard) l = std::max(l, op.lipschitz());
  return l + lambda;
}

Vec saga_estimate(const NodeState& s, const Vec& z, std::size_t i) {
  const Operator& op = (*s.ops).at(i);
  Vec out = s.table.mean() + s.lambda * z;
  op.add_scaled(op.value(z) - s.table.entry(i), 1.0, out);
  return out;
}

}  // namespace dsba
