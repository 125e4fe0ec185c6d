#pragma once

#include "tgn/autodiff.hpp"
#include "tgn/diffcore.hpp"
#include "tgn/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tgn {

/// Fully connected reference network: M inputs, biased tanh hidden layers,
/// linear C outputs. Makes no attribution claims.
struct DenseSpec {
  Index attributes = 0;
  std::vector<Index> hidden{16};
  Index outputs = 1;
  double l2 = 0.0;

  std::vector<Index> layer_sizes() const;
  void validate() const;
};

struct DenseParams {
  DenseSpec spec;
  ParamSet network;
  ScalerParams scaler;
  TableInfo info;
  std::uint64_t seed = 0;

  std::vector<Matrix*> parameters() { return parameter_refs(network); }
  std::vector<Matrix> parameter_values() const { return tgn::parameter_values(network); }
  void assign(std::span<const Matrix> values);
  // Weight matrices only; biases are not penalized.
  std::vector<std::size_t> penalized() const;
  std::size_t parameter_count() const { return network.parameter_count(); }
};

DenseParams init_dense(const DenseSpec& spec, std::uint64_t seed);

// Masked inputs are fed as 0.
Vector dense_predict(const DenseParams& params, const Vector& record, const MaskVector& mask);
Matrix dense_predict_rows(const DenseParams& params, const Matrix& records, const MaskMatrix& masks);

ad::Var dense_forward_batch(ad::Tape& tape, const DenseParams& params, std::span<const ad::Var> vars,
                            const Matrix& records, const MaskMatrix& masks);

void save_dense(const DenseParams& params, const std::string& path);
DenseParams load_dense(const std::string& path);

}  // namespace tgn
