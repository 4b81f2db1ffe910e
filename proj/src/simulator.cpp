#include "dsba/simulator.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dsba {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Mat stack_iterates(const std::vector<NodeState>& nodes) {
  Mat z(static_cast<Eigen::Index>(nodes.size()), nodes.front().dim());
  for (std::size_t n = 0; n < nodes.size(); ++n) z.row(static_cast<Eigen::Index>(n)) = nodes[n].z_curr.transpose();
  return z;
}

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

bool labels_binary(const Problem& p) { return binary_labels(p.shards); }

}  // namespace

CommMode parse_comm(const std::string& name) {
  if (name == "dense") return CommMode::kDense;
  if (name == "sparse") return CommMode::kSparse;
  throw ConfigError("comm: expected dense or sparse, got '" + name + "'");
}

std::string to_string(CommMode m) { return m == CommMode::kDense ? "dense" : "sparse"; }

void validate_config(const RunConfig& c) {
  if (c.dataset_path.has_value() == c.synthetic.has_value())
    throw ConfigError("data: exactly one of data.path or a synthetic spec is required");
  if (c.n_nodes < 1) throw ConfigError("graph.nodes must be at least 1");
  if (!(c.edge_prob > 0.0 && c.edge_prob <= 1.0)) throw ConfigError("graph.edge_prob must be in (0, 1]");
  if (!(c.tau_scale > 0.0)) throw ConfigError("graph.tau_scale must be positive");
  if (c.alpha < 0.0 || !std::isfinite(c.alpha)) throw ConfigError("run.alpha must be positive (or 0 for the default)");
  if (c.rounds < 1) throw ConfigError("run.rounds must be at least 1");
  if (c.cadence < 0) throw ConfigError("run.cadence must be non-negative");
  if (c.newton_iters < 1) throw ConfigError("run.newton_iters must be at least 1");
  if (c.variant == Variant::kPointSaga && c.n_nodes != 1) throw ConfigError("run.variant pointsaga needs graph.nodes = 1");
  if (c.variant == Variant::kExtra && c.comm == CommMode::kSparse)
    throw ConfigError("run.comm sparse is only defined for dsba and dsa");
}

std::unique_ptr<Problem> make_problem(Graph g, const MixingMatrix& m, Shards shards, Family family, double lambda) {
  auto p = std::make_unique<Problem>();
  p->graph = std::move(g);
  p->mixing = m;
  p->shards = std::move(shards);
  p->family = family;
  if (p->shards.n_nodes() != p->graph.n_nodes()) throw ConfigError("problem: shard count differs from node count");
  if (family != Family::kRidge && !binary_labels(p->shards))
    throw ConfigError("data: " + to_string(family) + " needs labels in {-1, +1}");
  p->lambda = lambda < 0.0 ? default_lambda(p->shards) : lambda;
  for (const auto& node : p->shards.per_node) {
    Shard s;
    s.reserve(node.size());
    for (const auto& smp : node) s.emplace_back(family, smp, p->shards.dim, p->shards.p);
    p->ops.push_back(std::move(s));
  }
  p->dim = p->ops.front().front().dim();
  p->lipschitz = shard_lipschitz(p->ops, p->lambda);
  p->z0 = Vec::Zero(p->dim);
  return p;
}

std::unique_ptr<Problem> build_problem(const RunConfig& cfg) {
  validate_config(cfg);
  ParsedData data = cfg.dataset_path ? load_libsvm(*cfg.dataset_path) : make_synthetic(*cfg.synthetic);
  if (data.samples.empty()) throw ConfigError("data: no samples");
  if (cfg.normalize) normalize_rows(data.samples);
  Graph g = cfg.n_nodes == 1 ? Graph(1) : gen_random_graph(cfg.n_nodes, cfg.edge_prob, cfg.graph_seed);
  MixingOptions mo;
  mo.tau_scale = cfg.tau_scale;
  const auto m = build_mixing_matrix(g, mo);
  auto shards = partition(std::move(data.samples), data.dim, cfg.n_nodes, cfg.partition_seed);
  return make_problem(std::move(g), m, std::move(shards), cfg.family, cfg.lambda);
}

Vec global_operator(const Problem& p, const Vec& z) {
  Vec f = Vec::Zero(z.size());
  for (const auto& shard : p.ops) f += local_operator(shard, z, p.lambda);
  return f;
}

Reference reference_solution(const Problem& p, double tol, int max_iter) {
  Reference ref;
  ref.z = Vec::Zero(p.dim);
  Vec f = global_operator(p, ref.z);
  double res = f.norm();
  const double n_lambda = static_cast<double>(p.n_nodes()) * p.lambda;
  for (int it = 0; it < max_iter && res > tol; ++it) {
    Mat jac = n_lambda * Mat::Identity(p.dim, p.dim);
    for (const auto& shard : p.ops) {
      const double inv_q = 1.0 / static_cast<double>(shard.size());
      for (const auto& op : shard) op.add_jacobian(ref.z, inv_q, jac);
    }
    const Vec step = jac.partialPivLu().solve(-f);
    double t = 1.0;
    Vec trial = ref.z + step;
    Vec ft = global_operator(p, trial);
    while (ft.norm() > (1.0 - 1e-4 * t) * res && t > 1e-10) {
      t *= 0.5;
      trial = ref.z + t * step;
      ft = global_operator(p, trial);
    }
    ref.iterations = it + 1;
    if (ft.norm() >= res) break;  // no further progress at machine precision
    ref.z = std::move(trial);
    f = std::move(ft);
    res = f.norm();
  }
  ref.residual = res;
  ref.converged = res <= tol;
  return ref;
}

std::vector<const Sample*> all_samples(const Problem& p) {
  std::vector<const Sample*> out;
  for (const auto& node : p.shards.per_node)
    for (const auto& s : node) out.push_back(&s);
  return out;
}

double auc_score(const Vec& w, const std::vector<const Sample*>& samples) {
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(samples.size());
  std::size_t pos = 0;
  for (const Sample* s : samples) {
    scored.emplace_back(s->features.dot(w), s->label > 0);
    pos += s->label > 0;
  }
  const std::size_t neg = samples.size() - pos;
  if (pos == 0 || neg == 0) throw ConfigError("auc_score: needs both classes");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Average 1-based ranks over ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (scored[k].second) rank_sum += avg;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double auc_score_bruteforce(const Vec& w, const std::vector<const Sample*>& samples) {
  double hits = 0.0, pairs = 0.0;
  for (const Sample* a : samples) {
    if (a->label <= 0) continue;
    for (const Sample* b : samples) {
      if (b->label > 0) continue;
      const double sa = a->features.dot(w), sb = b->features.dot(w);
      hits += sa > sb ? 1.0 : (sa == sb ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  if (pairs == 0.0) throw ConfigError("auc_score: needs both classes");
  return hits / pairs;
}

double effective_passes(const Problem& p, Variant v, long round) {
  if (v == Variant::kExtra) return static_cast<double>(round);
  return static_cast<double>(round) / static_cast<double>(p.shards.q_min);
}

LyapunovTracker::LyapunovTracker(const Problem& p, const Vec& z_star, double alpha)
    : p_(&p), z_star_(z_star), sum_z_(Mat::Zero(p.n_nodes(), p.dim)) {
  uq_star_ = Mat(p.n_nodes(), p.dim);
  for (int n = 0; n < p.n_nodes(); ++n) {
    uq_star_.row(n) = -alpha * local_operator(p.ops[n], z_star, p.lambda).transpose();
    std::vector<ComponentValue> vals;
    for (const auto& op : p.ops[n]) vals.push_back(op.value(z_star));
    at_star_.push_back(std::move(vals));
  }
  const double q = static_cast<double>(p.shards.q_min);
  c_ = q / (96.0 * p.lipschitz * p.lipschitz);
}

void LyapunovTracker::accumulate(const std::vector<NodeState>& nodes) { sum_z_ += stack_iterates(nodes); }

LyapunovTerms LyapunovTracker::evaluate(const std::vector<NodeState>& nodes) const {
  LyapunovTerms h;
  const Mat e = stack_iterates(nodes).rowwise() - z_star_.transpose();
  h.iterate = e.cwiseProduct(p_->mixing.w_tilde * e).sum();
  const Mat uq = (p_->mixing.w_tilde - p_->mixing.w) * sum_z_;
  h.dual = (uq - uq_star_).squaredNorm();
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const auto& tab = nodes[n].table;
    double s = 0.0;
    for (std::size_t i = 0; i < tab.size(); ++i)
      s += p_->ops[n][i].expand(tab.entry(i) - at_star_[n][i]).squared_norm();
    h.table += 2.0 / static_cast<double>(tab.size()) * s;
  }
  h.c = c_;
  return h;
}

RunResult run(const Problem& p, const RunConfig& cfg, const Reference& ref, const RunHooks& hooks) {
  if (cfg.variant == Variant::kPointSaga && p.n_nodes() != 1)
    throw ConfigError("run.variant pointsaga needs exactly one node");
  if (cfg.variant == Variant::kExtra && cfg.comm == CommMode::kSparse)
    throw ConfigError("run.comm sparse is only defined for dsba and dsa");
  if (cfg.rounds < 1) throw ConfigError("run.rounds must be at least 1");
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  RunResult res;
  res.reference = ref;
  res.lambda = p.lambda;
  res.alpha = cfg.alpha > 0.0 ? cfg.alpha : step_size_bound(p.lipschitz);
  StepConfig step{res.alpha, cfg.variant, {}};
  step.resolvent.newton_iters = cfg.newton_iters;
  const long cadence =
      cfg.cadence > 0 ? cfg.cadence : (cfg.variant == Variant::kExtra ? 1 : static_cast<long>(p.shards.q_min));

  std::vector<NodeState> nodes;
  nodes.reserve(p.n_nodes());
  for (int n = 0; n < p.n_nodes(); ++n) nodes.push_back(init_node(p.ops[n], p.z0, p.lambda, n, cfg.seed));

  std::unique_ptr<SparseProtocol> proto;
  std::vector<NodeState> shadow;
  if (cfg.comm == CommMode::kSparse) {
    proto = std::make_unique<SparseProtocol>(p.graph, p.mixing, step, nodes, p.z0);
    if (hooks.trace) proto->network().set_trace(hooks.trace);
    if (cfg.shadow_check) shadow = nodes;
  }
  CommLedger dense_ledger(p.n_nodes());
  auto ledger = [&]() -> const CommLedger& { return proto ? proto->ledger() : dense_ledger; };

  std::optional<LyapunovTracker> lyap;
  if (cfg.lyapunov) {
    lyap.emplace(p, ref.z, res.alpha);
    lyap->accumulate(nodes);
  }

  const Mat z_star = ref.z.transpose().replicate(p.n_nodes(), 1);
  const double d0 = (stack_iterates(nodes) - z_star).norm();
  const bool binary = p.family != Family::kRidge && labels_binary(p);
  const auto samples = binary ? all_samples(p) : std::vector<const Sample*>{};

  auto checkpoint = [&](long round) {
    MetricsRow row;
    row.round = round;
    row.effective_passes = effective_passes(p, cfg.variant, round);
    const Mat z = stack_iterates(nodes);
    const double dist = (z - z_star).norm();
    row.subopt = d0 > 0.0 ? dist / d0 : dist;
    const Vec zbar = z.colwise().mean().transpose();
    row.consensus_error = (z.rowwise() - zbar.transpose()).rowwise().norm().maxCoeff();
    if (p.family == Family::kAuc) {
      row.objective = kNaN;
    } else {
      double obj = 0.0;
      for (const auto& shard : p.ops) {
        double s = 0.0;
        for (const auto& op : shard) s += op.loss(zbar);
        obj += s / static_cast<double>(shard.size());
      }
      row.objective = obj / static_cast<double>(p.n_nodes()) + 0.5 * p.lambda * zbar.squaredNorm();
    }
    row.auc = binary ? auc_score(zbar.head(p.shards.dim), samples) : kNaN;
    row.cmax_values = ledger().cmax_values();
    row.cmax_metadata = ledger().cmax_metadata();
    row.lyapunov = lyap ? lyap->evaluate(nodes).total() : kNaN;
    row.wall_seconds = elapsed();
    res.rows.push_back(row);
    return row;
  };

  checkpoint(0);
  for (long r = 0; r < cfg.rounds; ++r) {
    try {
      if (cfg.variant == Variant::kExtra) {
        account_dense_round(dense_ledger, p.graph, p.dim, r);
        extra_round(nodes, p.mixing.w, p.mixing.w_tilde, res.alpha);
      } else if (proto) {
        proto->round(nodes);
        if (!shadow.empty()) {
          stochastic_round(shadow, p.mixing, step);
          for (std::size_t n = 0; n < nodes.size(); ++n)
            res.shadow_max_gap =
                std::max(res.shadow_max_gap, (nodes[n].z_curr - shadow[n].z_curr).cwiseAbs().maxCoeff());
        }
      } else if (cfg.variant == Variant::kPointSaga) {
        account_dense_round(dense_ledger, p.graph, p.dim, r);
        pointsaga_step(nodes, res.alpha, draw_sample(nodes.front()), step.resolvent);
      } else {
        account_dense_round(dense_ledger, p.graph, p.dim, r);
        stochastic_round(nodes, p.mixing, step);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(r) + ": " + e.what());
    }
    const long done = r + 1;
    res.rounds_run = done;
    if (lyap) lyap->accumulate(nodes);
    if (hooks.on_round) hooks.on_round(done, nodes);
    if (done % cadence == 0 || done == cfg.rounds) {
      const MetricsRow row = checkpoint(done);
      if (!std::isfinite(row.subopt)) throw std::runtime_error("round " + std::to_string(r) + ": iterates diverged");
      if (cfg.stop_subopt > 0.0 && row.subopt <= cfg.stop_subopt) break;
    }
  }

  for (const auto& n : nodes) res.counters.push_back(n.counters);
  res.peak_round_values = ledger().peak_round_values();
  res.final_iterates = stack_iterates(nodes);
  if (hooks.ledger_out) *hooks.ledger_out = ledger();
  res.wall_seconds = elapsed();
  return res;
}

const char* const kMetricsHeader =
    "round,effective_passes,subopt,consensus_error,objective,auc,cmax_values,cmax_metadata,lyapunov";

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows)
    os << r.round << ',' << fmt(r.effective_passes) << ',' << fmt(r.subopt) << ',' << fmt(r.consensus_error) << ','
       << fmt(r.objective) << ',' << fmt(r.auc) << ',' << r.cmax_values << ',' << r.cmax_metadata << ','
       << fmt(r.lyapunov) << '\n';
}

void write_compare_csv(std::ostream& os, const std::vector<std::pair<std::string, std::vector<MetricsRow>>>& runs,
                       bool header) {
  if (header) os << "variant,round,effective_passes,subopt,consensus_error,objective,auc,cmax_values\n";
  for (const auto& [name, rows] : runs)
    for (const auto& r : rows)
      os << name << ',' << r.round << ',' << fmt(r.effective_passes) << ',' << fmt(r.subopt) << ','
         << fmt(r.consensus_error) << ',' << fmt(r.objective) << ',' << fmt(r.auc) << ',' << r.cmax_values << '\n';
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["variant"] = to_string(c.variant);
  j["comm"] = to_string(c.comm);
  j["family"] = to_string(c.family);
  j["graph"] = {{"nodes", c.n_nodes}, {"edge_prob", c.edge_prob}, {"seed", c.graph_seed}, {"tau_scale", c.tau_scale}};
  nlohmann::json data;
  if (c.dataset_path) data["path"] = *c.dataset_path;
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    data["synthetic"] = {{"kind", s.kind == SyntheticKind::kRegression ? "regression" : "classification"},
                         {"samples", s.n_samples},
                         {"dim", s.dim},
                         {"rho", s.rho},
                         {"noise", s.noise},
                         {"margin", s.margin},
                         {"seed", s.seed}};
  }
  data["normalize"] = c.normalize;
  data["partition_seed"] = c.partition_seed;
  j["data"] = data;
  j["run"] = {{"alpha", c.alpha},   {"lambda", c.lambda},
              {"rounds", c.rounds}, {"cadence", c.cadence},
              {"seed", c.seed},     {"newton_iters", c.newton_iters},
              {"stop_subopt", c.stop_subopt}, {"lyapunov", c.lyapunov},
              {"shadow_check", c.shadow_check}};
  return j;
}

nlohmann::json run_manifest(const Problem& p, const RunConfig& cfg, const RunResult& r) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  nlohmann::json edges = nlohmann::json::array();
  for (auto [u, v] : p.graph.edges()) edges.push_back({u, v});
  j["graph"] = {{"nodes", p.n_nodes()},        {"edges", edges},
                {"tau", p.mixing.tau},         {"gamma", p.mixing.gamma},
                {"diameter", graph_diameter(p.graph)}};
  j["shards"] = shard_manifest(p.shards);
  j["problem"] = {{"family", to_string(p.family)}, {"dim", p.dim},       {"lambda", p.lambda},
                  {"lipschitz", p.lipschitz},      {"alpha", r.alpha}, {"total_samples", p.shards.total}};
  j["reference"] = {{"residual", r.reference.residual},
                    {"iterations", r.reference.iterations},
                    {"converged", r.reference.converged}};
  j["effective_pass"] = cfg.variant == Variant::kExtra ? "round (every round touches every local sample)"
                                                       : "round / q_min";
  std::uint64_t evals = 0, resolves = 0;
  for (const auto& c : r.counters) {
    evals += c.evals;
    resolves += c.resolves;
  }
  j["result"] = {{"rounds_run", r.rounds_run},
                 {"checkpoints", r.rows.size()},
                 {"final_subopt", r.rows.empty() ? kNaN : r.rows.back().subopt},
                 {"operator_evals", evals},
                 {"resolvent_calls", resolves},
                 {"peak_round_values", r.peak_round_values},
                 {"wall_seconds", r.wall_seconds}};
  if (cfg.comm == CommMode::kSparse && cfg.shadow_check) j["result"]["shadow_max_gap"] = r.shadow_max_gap;
  j["metrics_header"] = kMetricsHeader;
#ifdef __VERSION__
  j["environment"]["compiler"] = __VERSION__;
#endif
  j["environment"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  return j;
}

LinearFit fit_log_subopt(const std::vector<MetricsRow>& rows, double lo, double hi) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    if (r.subopt >= lo && r.subopt <= hi && r.subopt > 0.0) {
      xs.push_back(static_cast<double>(r.round));
      ys.push_back(std::log10(r.subopt));
    }
  }
  LinearFit f;
  f.points = xs.size();
  if (xs.size() < 2) return f;
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

double passes_to_reach(const std::vector<MetricsRow>& rows, double target) {
  for (const auto& r : rows)
    if (r.subopt <= target) return r.effective_passes;
  return kNaN;
}

}  // namespace dsba
