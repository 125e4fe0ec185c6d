#pragma once

#include "tgn/autodiff.hpp"
#include "tgn/dataset.hpp"
#include "tgn/diffcore.hpp"
#include "tgn/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tgn {

enum class NodeFeature { SumOutflow, SumInflow };

std::string to_string(NodeFeature f);
NodeFeature node_feature_from_string(const std::string& name);

/// Column metadata carried with a trained model so it can be applied to raw files.
struct TableInfo {
  std::vector<std::string> attribute_names;
  TaskKind task = TaskKind::Regression;
  std::vector<double> class_values;
};

/// Architecture of a TableGraphNet.
///
/// Distance networks map 2(E+1) pair features to one edge value; contribution
/// filters map the G*K pooled attribute features to C outputs. Both are
/// bias-free. Hidden layers use tanh, the last layer of each network is linear.
struct ModelSpec {
  Index attributes = 0;                         // M
  EncodingSpec encoding = EncodingSpec::none();  // E = encoding.width
  Index graphs = 1;                             // G
  std::vector<Index> distance_hidden{16, 8};
  Index filters = 1;  // F
  std::vector<Index> filter_hidden{16};
  Index outputs = 1;  // C
  std::vector<NodeFeature> node_features{NodeFeature::SumOutflow};
  double l2 = 0.0;

  Index distance_input_width() const { return 2 * (encoding.width + 1); }
  Index feature_kinds() const { return static_cast<Index>(node_features.size()); }
  Index filter_input_width() const { return graphs * feature_kinds(); }
  bool uses_inflow() const;
  std::vector<Index> distance_layer_sizes() const;
  std::vector<Index> filter_layer_sizes() const;
  void validate() const;
};

struct ModelParams {
  ModelSpec spec;
  std::vector<ParamSet> distance_nets;  // G, bias-free
  std::vector<ParamSet> filters;        // F, bias-free
  Matrix rho0;                          // 1 x C, the only bias in the model
  ScalerParams scaler;
  TableInfo info;
  std::uint64_t seed = 0;

  // Trainable matrices: distance nets, then filters, then rho0.
  std::vector<Matrix*> parameters();
  std::vector<Matrix> parameter_values() const;
  void assign(std::span<const Matrix> values);
  // Positions in parameters() subject to the L2 penalty (all but rho0).
  std::vector<std::size_t> penalized() const;
  std::size_t parameter_count() const;
  void validate() const;
};

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed);

// ---- Single-record operations ----------------------------------------------

/// M^2 x 2(E+1) pair rows in (k, l) row-major order, row k*M + l holding
/// (enc(k), enc(l), x_k, x_l). Rows whose governing attribute is masked are zero.
struct PairRows {
  Matrix rows;
  std::vector<bool> zeroed;
  Index attributes = 0;
};

PairRows cartesian_transform(const Vector& record, const MaskVector& mask,
                             const EncodingSpec& encoding, bool zero_on_masked_receiver);

/// e[j](k, l): distance from source k to receiver l in graph j.
struct EdgeTensor {
  std::vector<Matrix> graphs;

  Index graph_count() const { return static_cast<Index>(graphs.size()); }
  Index attributes() const { return graphs.empty() ? 0 : graphs.front().rows(); }
  double operator()(Index j, Index k, Index l) const { return graphs[j](k, l); }
};

EdgeTensor edge_tensor(const ModelParams& params, const PairRows& pairs);

// One M x K matrix per graph, columns in `kinds` order.
std::vector<Matrix> node_features(const EdgeTensor& edges, std::span<const NodeFeature> kinds);

// M x (G*K), graph-major then kind.
Matrix pool_features(std::span<const Matrix> per_graph);

struct Contributions {
  Matrix total;                   // M x C, rho_k
  std::vector<Matrix> per_filter;  // F of M x C, rho_{k,j}
};

Contributions contributions(const ModelParams& params, const Matrix& pooled);

struct Prediction {
  Vector output;        // C, pre-softmax for classification
  Vector rho0;          // C
  Matrix contributions;  // M x C
  std::vector<Matrix> per_filter;  // F of M x C, empty unless requested
};

// Chains the single-record operations above. Evaluates all M^2 pair rows.
Prediction predict_reference(const ModelParams& params, const Vector& record, const MaskVector& mask);

// Batched evaluation that skips zeroed pair rows. Agrees with
// predict_reference to rounding.
Prediction predict(const ModelParams& params, const Vector& record, const MaskVector& mask,
                   bool keep_per_filter = false);
std::vector<Prediction> predict_rows(const ModelParams& params, const Matrix& records,
                                     const MaskMatrix& masks, bool keep_per_filter = false);

// ---- Differentiable batch forward -------------------------------------------

struct BatchOutputs {
  ad::Var output;         // B x C
  ad::Var contributions;  // (B*M) x C, row b*M + k
  std::vector<ad::Var> per_filter;
};

// `vars` are bound to params.parameters() in order.
BatchOutputs forward_batch(ad::Tape& tape, const ModelParams& params, std::span<const ad::Var> vars,
                           const Matrix& records, const MaskMatrix& masks);

// Reorders attribute storage: new attribute p is old attribute perm[p].
// Encoding weights travel with their attributes.
ModelParams permute_attributes(const ModelParams& params, std::span<const Index> perm);

// ---- Persistence ------------------------------------------------------------

inline constexpr int kModelSchemaVersion = 1;

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace tgn
