#include "dsba/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

namespace dsba {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw DatasetError("libsvm line " + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view tok, std::size_t line, const char* what) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    parse_fail(line, std::string("non-numeric ") + what + " '" + std::string(tok) + "'");
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

ParsedData parse_libsvm(std::istream& is) {
  ParsedData out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string_view text(raw);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    const auto toks = split_ws(text);
    if (toks.empty()) continue;
    Sample s;
    s.line = line;
    s.label = parse_double(toks[0], line, "label");
    long prev = 0;
    for (std::size_t k = 1; k < toks.size(); ++k) {
      const auto colon = toks[k].find(':');
      if (colon == std::string_view::npos) parse_fail(line, "expected idx:val, got '" + std::string(toks[k]) + "'");
      const auto idx_tok = toks[k].substr(0, colon);
      long idx = 0;
      const auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
      if (ec != std::errc() || ptr != idx_tok.data() + idx_tok.size())
        parse_fail(line, "bad index '" + std::string(idx_tok) + "'");
      if (idx < 1) parse_fail(line, "index " + std::to_string(idx) + " < 1");
      if (idx <= prev) parse_fail(line, "indices not strictly increasing at " + std::to_string(idx));
      prev = idx;
      s.features.push(static_cast<std::int32_t>(idx - 1), parse_double(toks[k].substr(colon + 1), line, "value"));
    }
    out.dim = std::max(out.dim, static_cast<int>(prev));
    out.samples.push_back(std::move(s));
  }
  return out;
}

ParsedData load_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset '" + path + "'");
  return parse_libsvm(in);
}

void normalize_rows(std::vector<Sample>& samples) {
  for (auto& s : samples) {
    SparseVec kept;
    for (std::size_t k = 0; k < s.features.nnz(); ++k)
      if (s.features.val[k] != 0.0) kept.push(s.features.idx[k], s.features.val[k]);
    const double norm = std::sqrt(kept.squared_norm());
    if (norm == 0.0) throw DatasetError("all-zero sample at line " + std::to_string(s.line));
    for (double& v : kept.val) v /= norm;
    s.features = std::move(kept);
  }
}

Shards partition(std::vector<Sample> samples, int dim, int n_nodes, std::uint64_t seed) {
  if (n_nodes < 1) throw DatasetError("partition: need at least one node");
  if (samples.size() < static_cast<std::size_t>(n_nodes))
    throw DatasetError("partition: " + std::to_string(samples.size()) + " samples for " +
                       std::to_string(n_nodes) + " nodes");
  Shards sh;
  sh.dim = dim;
  sh.total = samples.size();
  std::size_t pos = 0;
  for (const auto& s : samples) {
    if (s.label > 0) ++pos;
    if (dim > 0) sh.rho = std::max(sh.rho, static_cast<double>(s.features.nnz()) / dim);
  }
  sh.p = static_cast<double>(pos) / static_cast<double>(sh.total);

  std::mt19937_64 rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  sh.per_node.resize(static_cast<std::size_t>(n_nodes));
  for (std::size_t k = 0; k < samples.size(); ++k)
    sh.per_node[k % static_cast<std::size_t>(n_nodes)].push_back(std::move(samples[k]));
  sh.q_min = sh.per_node.back().size();
  for (const auto& node : sh.per_node) sh.q_min = std::min(sh.q_min, node.size());
  return sh;
}

double default_lambda(const Shards& shards) {
  if (shards.total == 0) throw DatasetError("default_lambda: empty dataset");
  return 1.0 / (10.0 * static_cast<double>(shards.total));
}

bool binary_labels(const Shards& shards) {
  for (const auto& node : shards.per_node)
    for (const auto& s : node)
      if (s.label != 1.0 && s.label != -1.0) return false;
  return true;
}

std::string shards_digest(const Shards& shards) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& node : shards.per_node) {
    const std::uint64_t sz = node.size();
    mix(&sz, sizeof sz);
    for (const auto& s : node) {
      mix(&s.label, sizeof s.label);
      mix(s.features.idx.data(), s.features.idx.size() * sizeof(std::int32_t));
      mix(s.features.val.data(), s.features.val.size() * sizeof(double));
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

nlohmann::json shard_manifest(const Shards& shards) {
  nlohmann::json j;
  j["dim"] = shards.dim;
  j["total"] = shards.total;
  j["q_min"] = shards.q_min;
  j["positive_ratio"] = shards.p;
  j["rho"] = shards.rho;
  j["digest"] = shards_digest(shards);
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& node : shards.per_node) {
    std::vector<std::size_t> lines;
    lines.reserve(node.size());
    for (const auto& s : node) lines.push_back(s.line);
    nodes.push_back({{"size", node.size()}, {"source_lines", lines}});
  }
  return j;
}

ParsedData make_synthetic(const SyntheticSpec& spec) {
  if (spec.dim < 1 || spec.n_samples == 0) throw DatasetError("synthetic: empty shape");
  if (!(spec.rho > 0.0 && spec.rho <= 1.0)) throw DatasetError("synthetic: rho must be in (0, 1]");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int support = std::clamp(static_cast<int>(std::lround(spec.rho * spec.dim)), 1, spec.dim);

  Vec planted(spec.dim);
  for (int j = 0; j < spec.dim; ++j) planted[j] = gauss(rng);
  planted /= planted.norm();

  std::vector<std::int32_t> pool(static_cast<std::size_t>(spec.dim));
  std::iota(pool.begin(), pool.end(), 0);

  auto draw_point = [&] {
    // Partial Fisher-Yates for the support.
    for (int k = 0; k < support; ++k) {
      std::uniform_int_distribution<int> pick(k, spec.dim - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    std::vector<std::int32_t> idx(pool.begin(), pool.begin() + support);
    std::sort(idx.begin(), idx.end());
    SparseVec a;
    for (auto i : idx) {
      double v = 0.0;
      while (v == 0.0) v = gauss(rng);
      a.push(i, v);
    }
    const double norm = std::sqrt(a.squared_norm());
    for (double& v : a.val) v /= norm;
    return a;
  };

  ParsedData out;
  out.dim = spec.dim;
  out.samples.reserve(spec.n_samples);
  std::size_t guard = 0;
  while (out.samples.size() < spec.n_samples) {
    if (++guard > 1000 * spec.n_samples) throw DatasetError("synthetic: margin too large to fill the set");
    Sample s;
    s.features = draw_point();
    const double score = s.features.dot(planted);
    if (spec.kind == SyntheticKind::kRegression) {
      s.label = score + spec.noise * gauss(rng);
    } else {
      if (std::abs(score) < spec.margin || score == 0.0) continue;
      s.label = score > 0 ? 1.0 : -1.0;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace dsba
