#include <doctest.h>

#include "helpers.hpp"
#include "tgn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

using namespace tgn;

namespace {

Table parse(const std::string& text, const std::string& target = "y",
            TaskKind task = TaskKind::Regression) {
  std::istringstream in(text);
  TableSchema schema;
  schema.target = target;
  schema.task = task;
  return parse_table(in, schema, "inline");
}

std::string source_dir() { return TGN_SOURCE_DIR; }

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("missing token marks exactly one cell") {
  const Table t = parse("a,b,y\n1,2,3\nNA,5,6\n7,8,9\n");
  CHECK(t.rows() == 3);
  CHECK(t.attributes() == 2);
  CHECK(t.mask.count() == 5);
  CHECK_FALSE(t.mask(1, 0));
  CHECK(t.target[2] == 9.0);
}

TEST_CASE("quoted header, BOM, empty and custom missing tokens") {
  const Table t = parse("\xEF\xBB\xBF\"a\",\"b\",\"y\"\n1,,3\n?,5,6\n");
  CHECK(t.attribute_names == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(t.mask(0, 1));
  CHECK_FALSE(t.mask(1, 0));
}

TEST_CASE("ingestion errors carry positions") {
  CHECK_THROWS_AS(parse(""), IngestError);
  CHECK_THROWS_WITH_AS(parse("a,b,y\n"), doctest::Contains("no data rows"), IngestError);
  CHECK_THROWS_WITH_AS(parse("a,b,y\n1,2,3\n", "z"), doctest::Contains("unknown target"), IngestError);
  CHECK_THROWS_WITH_AS(parse("a,b,y\n1,2,3\n4,x,6\n"), doctest::Contains("inline:3:"), IngestError);
}

TEST_CASE("classification labels map to sorted class indices") {
  const Table t = parse("a,label\n0.1,7\n0.2,3\n0.3,7\n", "label", TaskKind::Classification);
  CHECK(t.class_values == std::vector<double>{3.0, 7.0});
  CHECK(t.label(0) == 1);
  CHECK(t.label(1) == 0);
  CHECK(t.output_width() == 2);
}

TEST_CASE("bundled Boston Housing has 506 records and 13 attributes") {
  TableSchema s;
  s.target = "MEDV";
  const Table t = load_table(source_dir() + "/data/boston_housing.csv", s);
  CHECK(t.rows() == 506);
  CHECK(t.attributes() == 13);
}

TEST_CASE("scaler endpoints and midpoint") {
  const Table t = parse("a,y\n2,0\n4,0\n6,0\n");
  const ScalerParams sc = fit_scaler(t);
  const Table s = apply_scaler(t, sc);
  CHECK(s.values(0, 0) == 1e-6);
  CHECK(s.values(1, 0) == doctest::Approx(0.5000005).epsilon(1e-15));
  CHECK(s.values(2, 0) == 1.0);
}

TEST_CASE("all-missing and constant columns") {
  const Table t = parse("a,b,y\nNA,5,0\nNA,5,0\nNA,5,0\n");
  const ScalerParams sc = fit_scaler(t);
  CHECK(sc.present_count[0] == 0);
  const Table s = apply_scaler(t, sc);
  CHECK((s.values.col(0).array() == 0.0).all());
  CHECK(s.mask.col(0).count() == 0);
  CHECK((s.values.col(1).array() == 1e-6).all());
}

TEST_CASE("scaling clamps, keeps the mask and is strictly monotone") {
  const Table train = testing::random_table(50, 4, 3, 0.8);
  const ScalerParams sc = fit_scaler(train);
  const Table s = apply_scaler(train, sc);
  CHECK((s.mask.array() == train.mask.array()).all());
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index k = 0; k < s.attributes(); ++k) {
      if (s.mask(i, k)) {
        CHECK(s.values(i, k) >= 1e-6);
        CHECK(s.values(i, k) <= 1.0);
      } else {
        CHECK(s.values(i, k) == 0.0);
      }
    }
  }
  for (Index k = 0; k < 4; ++k) {
    CHECK(scale_value(sc, k, sc.min[k] - 10.0) == 1e-6);
    CHECK(scale_value(sc, k, sc.max[k] + 10.0) == 1.0);
    double prev = -1.0;
    for (int step = 0; step <= 20; ++step) {
      const double v = scale_value(sc, k, sc.min[k] + (sc.max[k] - sc.min[k]) * step / 20.0);
      CHECK(v > prev);
      prev = v;
    }
  }
  ScalerParams empty;
  CHECK_THROWS_AS(apply_scaler(train, empty), UsageError);
  const Table narrow = testing::random_table(5, 3, 1);
  CHECK_THROWS_AS(apply_scaler(narrow, sc), UsageError);
}

TEST_CASE("split sizes, determinism and partition") {
  const SplitIndices a = split_indices(100, 5);
  CHECK(a.train.size() == 64);
  CHECK(a.validation.size() == 16);
  CHECK(a.test.size() == 20);
  const SplitIndices b = split_indices(100, 5);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  std::set<Index> all(a.train.begin(), a.train.end());
  all.insert(a.validation.begin(), a.validation.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 100);

  SplitFractions digits{0.56, 0.14, 0.30};
  CHECK(split_indices(1000, 1, digits).test.size() == 300);
  const SplitIndices d = split_indices(1797, 1, digits);
  CHECK(d.test.size() == 539);

  CHECK_THROWS_AS(split_indices(100, 1, SplitFractions{0.5, 0.2, 0.2}), ConfigError);
  CHECK_THROWS_AS(split_indices(4, 1), ConfigError);
}

TEST_CASE("split partitions every seed") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SplitIndices s = split_indices(37, seed);
    std::vector<Index> all = s.train;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (Index i = 0; i < 37; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("one_hot") {
  const Vector v = one_hot(1, 3);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == 0.0);
  CHECK(one_hot(0, 1)[0] == 1.0);
  for (Index m = 1; m < 6; ++m) {
    for (Index k = 0; k < m; ++k) CHECK(one_hot(k, m).sum() == 1.0);
  }
  CHECK_THROWS_AS(one_hot(3, 3), InputError);
  CHECK_THROWS_AS(one_hot(-1, 3), InputError);
}

TEST_CASE("missingness sampling") {
  CHECK(sample_missingness(10, 10, 0.0, 1).count() == 100);
  CHECK(sample_missingness(10, 10, 1.0, 1).count() == 0);
  const MaskMatrix half = sample_missingness(100, 100, 0.5, 9);
  const double missing = 1.0 - static_cast<double>(half.count()) / 10000.0;
  CHECK(missing >= 0.47);
  CHECK(missing <= 0.53);
  CHECK((sample_missingness(20, 5, 0.3, 4).array() == sample_missingness(20, 5, 0.3, 4).array()).all());
  CHECK_THROWS_AS(sample_missingness(2, 2, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(sample_missingness(2, 2, -0.1, 1), ConfigError);

  const MaskMatrix native = testing::random_mask(30, 6, 0.7, 2);
  const MaskMatrix combined = combine_masks(native, sample_missingness(30, 6, 0.5, 3));
  for (Index i = 0; i < 30; ++i) {
    for (Index k = 0; k < 6; ++k) {
      if (!native(i, k)) CHECK_FALSE(combined(i, k));
    }
  }
}

TEST_CASE("batches") {
  const auto b = make_batches(10, 4, 1);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  CHECK(make_batches(10, 10, 1).size() == 1);
  CHECK(make_batches(10, 50, 1).size() == 1);
  CHECK(make_batches(10, 4, 1) == make_batches(10, 4, 1));
  std::vector<Index> all;
  for (const auto& batch : b) all.insert(all.end(), batch.begin(), batch.end());
  std::sort(all.begin(), all.end());
  for (Index i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("encoding spec validation") {
  CHECK_NOTHROW(EncodingSpec::one_hot(4).validate(4));
  CHECK_NOTHROW(EncodingSpec::none().validate(4));
  CHECK_THROWS_AS(EncodingSpec::one_hot(3).validate(4), ConfigError);
  CHECK_THROWS_AS((EncodingSpec{EncodingKind::None, 2}.validate(4)), ConfigError);
}

}  // TEST_SUITE
