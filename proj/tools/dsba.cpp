// dsba: run, compare, validate and prep.
//
// Exit codes: 0 success, 1 validation failure, 2 config or input error,
// 3 runtime error.

#include "dsba/simulator.hpp"
#include "dsba/validation.hpp"

#include "CLI11.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace dsba;

namespace {

enum Exit { kOk = 0, kValidationFailed = 1, kConfigError = 2, kRuntimeError = 3 };

const std::set<std::string> kKnownKeys{
    "graph.nodes",   "graph.edge_prob",   "graph.seed",       "graph.tau_scale",  "data.path",
    "data.normalize", "data.partition_seed", "data.kind",      "data.samples",     "data.dim",
    "data.rho",      "data.noise",        "data.margin",      "data.seed",        "run.variant",
    "run.comm",      "run.family",        "run.alpha",        "run.lambda",       "run.rounds",
    "run.cadence",   "run.seed",          "run.newton_iters", "run.stop_subopt",  "run.lyapunov",
    "run.shadow_check", "compare.variants", "compare.alpha_dsba", "compare.alpha_dsa", "compare.alpha_extra"};

using Tree = boost::property_tree::ptree;

template <class T>
T get(const Tree& t, const std::string& key, T fallback) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return fallback;
  std::istringstream is(*v);
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    std::string s;
    is >> s;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return *v;
  } else {
    is >> out;
    if (!is || !(is >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + *v + "'");
    return out;
  }
}

Variant variant_of(const std::string& key, const std::string& name) {
  try {
    return parse_variant(name);
  } catch (const AlgorithmError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

Family family_of(const std::string& key, const std::string& name) {
  try {
    return parse_family(name);
  } catch (const OperatorError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

Tree load_tree(const std::string& path) {
  Tree t;
  if (path.empty()) return t;
  try {
    boost::property_tree::read_ini(path, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  for (const auto& [section, body] : t) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      (void)value;
      if (!kKnownKeys.count(section + "." + key)) throw ConfigError("config: unknown key " + section + "." + key);
    }
  }
  return t;
}

RunConfig config_from_tree(const Tree& t) {
  RunConfig c;
  c.n_nodes = get(t, "graph.nodes", c.n_nodes);
  c.edge_prob = get(t, "graph.edge_prob", c.edge_prob);
  c.graph_seed = get(t, "graph.seed", c.graph_seed);
  c.tau_scale = get(t, "graph.tau_scale", c.tau_scale);

  if (auto p = t.get_optional<std::string>("data.path")) c.dataset_path = *p;
  const bool synthetic = t.get_child_optional("data") &&
                         std::any_of(t.get_child("data").begin(), t.get_child("data").end(), [](const auto& kv) {
                           return kv.first != "path" && kv.first != "normalize" && kv.first != "partition_seed";
                         });
  if (synthetic) {
    SyntheticSpec s;
    const auto kind = get<std::string>(t, "data.kind", "regression");
    if (kind == "regression")
      s.kind = SyntheticKind::kRegression;
    else if (kind == "classification")
      s.kind = SyntheticKind::kClassification;
    else
      throw ConfigError("data.kind: expected regression or classification, got '" + kind + "'");
    s.n_samples = get(t, "data.samples", s.n_samples);
    s.dim = get(t, "data.dim", s.dim);
    s.rho = get(t, "data.rho", s.rho);
    s.noise = get(t, "data.noise", s.noise);
    s.margin = get(t, "data.margin", s.margin);
    s.seed = get(t, "data.seed", s.seed);
    c.synthetic = s;
  }
  c.normalize = get(t, "data.normalize", c.normalize);
  c.partition_seed = get(t, "data.partition_seed", c.partition_seed);

  c.variant = variant_of("run.variant", get<std::string>(t, "run.variant", to_string(c.variant)));
  c.comm = parse_comm(get<std::string>(t, "run.comm", to_string(c.comm)));
  c.family = family_of("run.family", get<std::string>(t, "run.family", to_string(c.family)));
  c.alpha = get(t, "run.alpha", c.alpha);
  c.lambda = get(t, "run.lambda", c.lambda);
  c.rounds = get(t, "run.rounds", c.rounds);
  c.cadence = get(t, "run.cadence", c.cadence);
  c.seed = get(t, "run.seed", c.seed);
  c.newton_iters = get(t, "run.newton_iters", c.newton_iters);
  c.stop_subopt = get(t, "run.stop_subopt", c.stop_subopt);
  c.lyapunov = get(t, "run.lyapunov", c.lyapunov);
  c.shadow_check = get(t, "run.shadow_check", c.shadow_check);
  return c;
}

// Command-line values that win over the file.
struct Overrides {
  double alpha = 0.0;
  long rounds = 0;
  std::uint64_t seed = 0;
  std::string variant, comm, family, data, synthetic;
  double tau_scale = 0.0;
  int newton_iters = 0;
  long cadence = 0;
  int nodes = 0;
  CLI::Option *o_alpha = nullptr, *o_rounds = nullptr, *o_seed = nullptr, *o_variant = nullptr, *o_comm = nullptr,
              *o_family = nullptr, *o_data = nullptr, *o_synth = nullptr, *o_tau = nullptr, *o_newton = nullptr,
              *o_cadence = nullptr, *o_nodes = nullptr;

  void attach(CLI::App* app) {
    o_alpha = app->add_option("--alpha", alpha, "step size (default 1/(24L))");
    o_rounds = app->add_option("--rounds", rounds, "number of rounds");
    o_seed = app->add_option("--seed", seed, "master sampling seed");
    o_variant = app->add_option("--variant", variant, "dsba | dsa | extra | pointsaga");
    o_comm = app->add_option("--comm", comm, "dense | sparse");
    o_family = app->add_option("--family", family, "ridge | logistic | auc");
    o_data = app->add_option("--data", data, "LIBSVM file (replaces the data source)");
    o_synth = app->add_option("--synthetic", synthetic, "regression | classification (replaces the data source)");
    o_tau = app->add_option("--tau-scale", tau_scale, "tau as a multiple of lambda_max(L)");
    o_newton = app->add_option("--newton-iters", newton_iters, "Newton iterations in the logistic resolvent");
    o_cadence = app->add_option("--cadence", cadence, "rounds between metric rows");
    o_nodes = app->add_option("--nodes", nodes, "number of nodes");
  }

  void apply(RunConfig& c) const {
    if (o_alpha->count()) c.alpha = alpha;
    if (o_rounds->count()) c.rounds = rounds;
    if (o_seed->count()) c.seed = seed;
    if (o_variant->count()) c.variant = variant_of("--variant", variant);
    if (o_comm->count()) c.comm = parse_comm(comm);
    if (o_family->count()) c.family = family_of("--family", family);
    if (o_tau->count()) c.tau_scale = tau_scale;
    if (o_newton->count()) c.newton_iters = newton_iters;
    if (o_cadence->count()) c.cadence = cadence;
    if (o_nodes->count()) c.n_nodes = nodes;
    if (o_data->count() && o_synth->count()) throw ConfigError("--data and --synthetic are exclusive");
    if (o_data->count()) {
      c.dataset_path = data;
      c.synthetic.reset();
    }
    if (o_synth->count()) {
      SyntheticSpec s = c.synthetic.value_or(SyntheticSpec{});
      if (synthetic == "regression")
        s.kind = SyntheticKind::kRegression;
      else if (synthetic == "classification")
        s.kind = SyntheticKind::kClassification;
      else
        throw ConfigError("--synthetic: expected regression or classification");
      c.synthetic = s;
      c.dataset_path.reset();
    }
  }
};

fs::path output_dir(const std::string& flag) {
  fs::path dir = !flag.empty() ? fs::path(flag) : (std::getenv("DSBA_OUT_DIR") ? fs::path(std::getenv("DSBA_OUT_DIR")) : fs::path("dsba_out"));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

// Problem construction failures are input errors.
std::unique_ptr<Problem> build_or_config_error(const RunConfig& cfg) {
  try {
    return build_problem(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const DatasetError& e) {
    throw ConfigError(e.what());
  } catch (const TopologyError& e) {
    throw ConfigError(e.what());
  } catch (const OperatorError& e) {
    throw ConfigError(e.what());
  }
}

int cmd_run(const std::string& config, const Overrides& ov, const std::string& out, bool trace) {
  RunConfig cfg = config_from_tree(load_tree(config));
  ov.apply(cfg);
  validate_config(cfg);
  const auto p = build_or_config_error(cfg);
  const auto dir = output_dir(out);
  const auto ref = reference_solution(*p);
  if (!ref.converged)
    std::cerr << "warning: reference residual " << ref.residual << " above 1e-12 after " << ref.iterations
              << " iterations\n";
  std::ofstream trace_os;
  RunHooks hooks;
  if (trace) {
    if (cfg.comm != CommMode::kSparse) throw ConfigError("--trace needs --comm sparse");
    trace_os = open_out(dir / "trace.csv");
    hooks.trace = &trace_os;
  }
  const auto res = run(*p, cfg, ref, hooks);
  auto csv = open_out(dir / "metrics.csv");
  write_metrics_csv(csv, res.rows);
  auto man = open_out(dir / "manifest.json");
  man << run_manifest(*p, cfg, res).dump(2) << '\n';
  const auto& last = res.rows.back();
  std::cout << to_string(cfg.variant) << ' ' << to_string(cfg.comm) << ": " << res.rounds_run << " rounds, "
            << std::setprecision(4) << last.effective_passes << " passes, subopt " << last.subopt << ", C_max "
            << last.cmax_values << " -> " << dir.string() << '\n';
  return kOk;
}

int cmd_compare(const std::string& config, const Overrides& ov, const std::string& out, std::string variants) {
  const Tree tree = load_tree(config);
  RunConfig base = config_from_tree(tree);
  ov.apply(base);
  if (variants.empty()) variants = get<std::string>(tree, "compare.variants", "dsba,dsa,extra");
  std::vector<Variant> list;
  std::stringstream ss(variants);
  for (std::string name; std::getline(ss, name, ',');)
    if (!name.empty()) list.push_back(variant_of("compare.variants", name));
  if (list.empty()) throw ConfigError("compare.variants: empty list");

  base.variant = list.front();
  validate_config(base);
  const auto p = build_or_config_error(base);
  const auto dir = output_dir(out);
  const auto ref = reference_solution(*p);

  std::vector<std::pair<std::string, std::vector<MetricsRow>>> runs;
  nlohmann::json manifest;
  manifest["runs"] = nlohmann::json::array();
  for (Variant v : list) {
    RunConfig cfg = base;
    cfg.variant = v;
    if (v == Variant::kExtra) cfg.comm = CommMode::kDense;
    cfg.alpha = get(tree, "compare.alpha_" + to_string(v), base.alpha);
    if (ov.o_alpha->count()) cfg.alpha = ov.alpha;
    validate_config(cfg);
    const auto res = run(*p, cfg, ref);
    manifest["runs"].push_back(run_manifest(*p, cfg, res));
    const double passes = passes_to_reach(res.rows, 1e-6);
    std::cout << std::left << std::setw(10) << to_string(v) << " passes to 1e-6: "
              << (std::isnan(passes) ? std::string("not reached") : std::to_string(passes)) << '\n';
    runs.emplace_back(to_string(v), res.rows);
  }
  auto csv = open_out(dir / "compare.csv");
  write_compare_csv(csv, runs);
  auto man = open_out(dir / "manifest.json");
  man << manifest.dump(2) << '\n';
  return kOk;
}

int cmd_validate(double tau_scale, int newton_iters) {
  SuiteOptions o;
  o.tau_scale = tau_scale;
  o.newton_iters = newton_iters;
  if (!(tau_scale > 0.0)) throw ConfigError("--tau-scale must be positive");
  if (newton_iters < 1) throw ConfigError("--newton-iters must be at least 1");
  const bool ok = print_checks(std::cout, run_validation(o));
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << '\n';
  return ok ? kOk : kValidationFailed;
}

int cmd_prep(const std::string& config, const Overrides& ov, const std::string& out) {
  RunConfig cfg = config_from_tree(load_tree(config));
  ov.apply(cfg);
  if (cfg.dataset_path.has_value() == cfg.synthetic.has_value())
    throw ConfigError("data: exactly one of data.path or a synthetic spec is required");
  ParsedData data;
  try {
    data = cfg.dataset_path ? load_libsvm(*cfg.dataset_path) : make_synthetic(*cfg.synthetic);
    if (cfg.normalize) normalize_rows(data.samples);
  } catch (const DatasetError& e) {
    throw ConfigError(e.what());
  }
  const auto dir = output_dir(out);
  auto os = open_out(dir / "data.libsvm");
  os << std::setprecision(17);
  for (const auto& s : data.samples) {
    os << s.label;
    for (std::size_t k = 0; k < s.features.nnz(); ++k) os << ' ' << s.features.idx[k] + 1 << ':' << s.features.val[k];
    os << '\n';
  }
  const auto shards = partition(data.samples, data.dim, cfg.n_nodes, cfg.partition_seed);
  auto man = open_out(dir / "shards.json");
  nlohmann::json j = shard_manifest(shards);
  j["dim"] = data.dim;
  j["normalized"] = cfg.normalize;
  man << j.dump(2) << '\n';
  std::cout << data.samples.size() << " samples, d = " << data.dim << ", " << cfg.n_nodes << " shards, digest "
            << shards_digest(shards) << " -> " << dir.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized stochastic root finding with SAGA tables"};
  app.require_subcommand(1);

  std::string config, out;
  Overrides ov_run, ov_cmp, ov_prep;
  bool trace = false;
  auto* run_cmd = app.add_subcommand("run", "run one variant and write metrics.csv and manifest.json");
  run_cmd->add_option("-c,--config", config, "INI config file");
  run_cmd->add_option("-o,--out", out, "output directory (default $DSBA_OUT_DIR or ./dsba_out)");
  run_cmd->add_flag("--trace", trace, "also write the relay trace (sparse mode)");
  ov_run.attach(run_cmd);

  std::string variants;
  auto* cmp_cmd = app.add_subcommand("compare", "run several variants on the same graph, shards and seeds");
  cmp_cmd->add_option("-c,--config", config, "INI config file");
  cmp_cmd->add_option("-o,--out", out, "output directory (default $DSBA_OUT_DIR or ./dsba_out)");
  cmp_cmd->add_option("--variants", variants, "comma-separated list (default dsba,dsa,extra)");
  ov_cmp.attach(cmp_cmd);
  ov_cmp.o_seed->required();

  double tau_scale = 1.0;
  int newton_iters = 20;
  auto* val_cmd = app.add_subcommand("validate", "run the property suites and print a PASS/FAIL table");
  val_cmd->add_option("--tau-scale", tau_scale, "tau as a multiple of lambda_max(L); below 1 is invalid");
  val_cmd->add_option("--newton-iters", newton_iters, "Newton iterations in the logistic resolvent");

  auto* prep_cmd = app.add_subcommand("prep", "normalize a data set and write it with its shard manifest");
  prep_cmd->add_option("-c,--config", config, "INI config file");
  prep_cmd->add_option("-o,--out", out, "output directory (default $DSBA_OUT_DIR or ./dsba_out)");
  ov_prep.attach(prep_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(config, ov_run, out, trace);
    if (*cmp_cmd) return cmd_compare(config, ov_cmp, out, variants);
    if (*val_cmd) return cmd_validate(tau_scale, newton_iters);
    if (*prep_cmd) return cmd_prep(config, ov_prep, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
