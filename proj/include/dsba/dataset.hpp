#ifndef DSBA_DATASET_HPP
#define DSBA_DATASET_HPP

#include "dsba/sparse_vec.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsba {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  SparseVec features;
  double label = 0.0;
  // 1-based line in the source text, 0 for generated samples.
  std::size_t line = 0;

  bool operator==(const Sample&) const = default;
};

struct ParsedData {
  std::vector<Sample> samples;
  int dim = 0;
};

// One sample per line: `label idx:val idx:val ...` with 1-based, strictly
// increasing indices. Blank lines and `#` comments are skipped.
ParsedData parse_libsvm(std::istream& is);
ParsedData load_libsvm(const std::string& path);

// Unit l2 norm per sample; explicit zeros are dropped. Throws on an
// all-zero sample, naming its source line.
void normalize_rows(std::vector<Sample>& samples);

struct Shards {
  std::vector<std::vector<Sample>> per_node;
  int dim = 0;
  std::size_t q_min = 0;
  std::size_t total = 0;  // Q
  double p = 0.0;         // fraction of samples with label > 0
  double rho = 0.0;       // max over samples of nnz / dim

  int n_nodes() const { return static_cast<int>(per_node.size()); }
};

// Seeded shuffle then round-robin, so shard sizes differ by at most one and
// the remainder lands on the low-index nodes.
Shards partition(std::vector<Sample> samples, int dim, int n_nodes, std::uint64_t seed);

// lambda = 1 / (10 Q) with Q the total sample count.
double default_lambda(const Shards& shards);

// True when every label is exactly +1 or -1.
bool binary_labels(const Shards& shards);

// Order-sensitive FNV-1a digest of shard contents, for manifests.
std::string shards_digest(const Shards& shards);
nlohmann::json shard_manifest(const Shards& shards);

enum class SyntheticKind { kRegression, kClassification };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kRegression;
  std::size_t n_samples = 500;
  int dim = 100;
  double rho = 0.1;            // target nnz / dim per sample
  double noise = 0.1;          // regression: label noise std
  double margin = 0.0;         // classification: resample points with |w*.a| < margin
  std::uint64_t seed = 1;
};

// Gaussian features on a random support of size max(1, round(rho * dim)),
// normalized to unit norm; labels from a planted linear model.
ParsedData make_synthetic(const SyntheticSpec& spec);

}  // namespace dsba

#endif  // DSBA_DATASET_HPP
