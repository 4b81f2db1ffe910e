#include "doctest.h"

#include "dsba/dataset.hpp"

#include <cmath>
#include <sstream>

using namespace dsba;

TEST_CASE("parse libsvm lines") {
  std::istringstream in("+1 1:0.5 3:2\n# comment\n\n-1 2:1e-1 # tail\n0.25 4:1\n");
  const auto d = parse_libsvm(in);
  REQUIRE(d.samples.size() == 3);
  CHECK(d.dim == 4);
  CHECK(d.samples[0].label == 1.0);
  CHECK(d.samples[0].features.idx == std::vector<std::int32_t>{0, 2});
  CHECK(d.samples[1].features.val[0] == doctest::Approx(0.1));
  CHECK(d.samples[1].line == 4);
  CHECK(d.samples[2].label == 0.25);
}

TEST_CASE("parse errors name the line") {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      parse_libsvm(in);
    } catch (const DatasetError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with("1 1:1\nabc 2:1\n", "line 2"));
  CHECK(fails_with("1 0:1\n", "< 1"));
  CHECK(fails_with("1 3:1 2:1\n", "increasing"));
  CHECK(fails_with("1 3:1 3:1\n", "increasing"));
  CHECK(fails_with("1 2:x\n", "value"));
  CHECK(fails_with("1 2\n", "idx:val"));
}

TEST_CASE("normalization") {
  std::istringstream in("1 1:3 2:0 3:4\n1 2:0\n");
  auto d = parse_libsvm(in);
  std::vector<Sample> first{d.samples[0]};
  normalize_rows(first);
  CHECK(first[0].features.nnz() == 2);
  CHECK(first[0].features.val[0] == doctest::Approx(0.6));
  CHECK(first[0].features.squared_norm() == doctest::Approx(1.0));
  std::vector<Sample> zero{d.samples[1]};
  CHECK_THROWS_WITH_AS(normalize_rows(zero), doctest::Contains("line 2"), DatasetError);
}

TEST_CASE("partition is balanced and seeded") {
  SyntheticSpec spec;
  spec.n_samples = 103;
  spec.dim = 20;
  const auto d = make_synthetic(spec);
  const auto a = partition(d.samples, d.dim, 10, 7);
  const auto b = partition(d.samples, d.dim, 10, 7);
  CHECK(shards_digest(a) == shards_digest(b));
  CHECK(a.q_min == 10);
  CHECK(a.per_node[0].size() == 11);
  CHECK(a.per_node[9].size() == 10);
  CHECK(a.total == 103);
  CHECK(default_lambda(a) == doctest::Approx(1.0 / 1030.0));
  CHECK(shards_digest(partition(d.samples, d.dim, 10, 8)) != shards_digest(a));
  CHECK_THROWS_AS(partition(d.samples, d.dim, 200, 1), DatasetError);
  const auto man = shard_manifest(a);
  CHECK(man["nodes"].size() == 10);
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kClassification;
  spec.n_samples = 200;
  spec.dim = 40;
  spec.rho = 0.05;
  spec.margin = 0.1;
  const auto d = make_synthetic(spec);
  CHECK(d.samples.size() == 200);
  std::size_t pos = 0;
  for (const auto& s : d.samples) {
    CHECK(s.features.nnz() == 2);
    CHECK(s.features.squared_norm() == doctest::Approx(1.0));
    CHECK(std::abs(s.label) == 1.0);
    pos += s.label > 0;
  }
  CHECK(pos > 0);
  CHECK(pos < 200);
  const auto sh = partition(d.samples, d.dim, 4, 1);
  CHECK(binary_labels(sh));
  CHECK(sh.rho == doctest::Approx(0.05));
  CHECK(make_synthetic(spec).samples == d.samples);
}
