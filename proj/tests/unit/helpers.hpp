#pragma once

#include "tgn/dataset.hpp"
#include "tgn/random.hpp"

#include <filesystem>
#include <string>

namespace tgn::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

inline MaskMatrix random_mask(Index rows, Index cols, double keep, std::uint64_t seed) {
  Rng rng(seed);
  MaskMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.bernoulli(keep);
  }
  return m;
}

// Scaled-looking table: present values in [1e-6, 1], masked cells 0.
inline Table random_table(Index rows, Index cols, std::uint64_t seed, double keep = 1.0,
                          TaskKind task = TaskKind::Regression, Index classes = 2) {
  Table t;
  for (Index k = 0; k < cols; ++k) t.attribute_names.push_back("a" + std::to_string(k));
  t.values = random_matrix(rows, cols, seed, 1e-6, 1.0);
  t.mask = random_mask(rows, cols, keep, mix_seed(seed, 1));
  t.values = t.mask.select(t.values, Matrix::Zero(rows, cols));
  t.task = task;
  t.target = random_matrix(rows, 1, mix_seed(seed, 2), 0.0, 1.0).col(0);
  if (task == TaskKind::Classification) {
    Rng rng(mix_seed(seed, 3));
    for (Index i = 0; i < rows; ++i) t.target[i] = static_cast<double>(rng.below(static_cast<std::uint64_t>(classes)));
    for (Index c = 0; c < classes; ++c) t.class_values.push_back(static_cast<double>(c));
  }
  return t;
}

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("tgn_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace tgn::testing
