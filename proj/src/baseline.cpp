#include "tgn/baseline.hpp"

#include "tgn/serialize.hpp"

namespace tgn {

std::vector<Index> DenseSpec::layer_sizes() const {
  std::vector<Index> sizes{attributes};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(outputs);
  return sizes;
}

void DenseSpec::validate() const {
  if (attributes < 1) throw ConfigError("dense: attribute count must be >= 1");
  if (outputs < 1) throw ConfigError("dense: output width must be >= 1");
  for (Index h : hidden) {
    if (h < 1) throw ConfigError("dense: hidden sizes must be >= 1");
  }
  if (l2 < 0.0) throw ConfigError("dense: L2 coefficient must be >= 0");
}

void DenseParams::assign(std::span<const Matrix> values) {
  auto refs = parameters();
  if (refs.size() != values.size()) throw ShapeError("assign: parameter count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i]->rows() != values[i].rows() || refs[i]->cols() != values[i].cols()) {
      throw ShapeError("assign: shape mismatch at parameter " + std::to_string(i));
    }
    *refs[i] = values[i];
  }
}

std::vector<std::size_t> DenseParams::penalized() const {
  std::vector<std::size_t> idx;
  std::size_t pos = 0;
  for (const auto& l : network.layers) {
    idx.push_back(pos++);
    if (l.bias) ++pos;
  }
  return idx;
}

DenseParams init_dense(const DenseSpec& spec, std::uint64_t seed) {
  spec.validate();
  DenseParams p;
  p.spec = spec;
  p.seed = seed;
  p.network = init_params(spec.layer_sizes(), BiasMode::Learned, seed);
  return p;
}

namespace {

Matrix masked_inputs(const Matrix& records, const MaskMatrix& masks) {
  if (records.rows() != masks.rows() || records.cols() != masks.cols()) {
    throw ShapeError("dense: records and masks disagree in shape");
  }
  return masks.select(records, Matrix::Zero(records.rows(), records.cols()));
}

}  // namespace

Matrix dense_predict_rows(const DenseParams& params, const Matrix& records,
                          const MaskMatrix& masks) {
  return mlp_forward_rows(params.network, masked_inputs(records, masks), Activation::Tanh);
}

Vector dense_predict(const DenseParams& params, const Vector& record, const MaskVector& mask) {
  if (record.size() != params.spec.attributes || mask.size() != record.size()) {
    throw ShapeError("dense_predict: record has " + std::to_string(record.size()) +
                     " attributes, network expects " + std::to_string(params.spec.attributes));
  }
  return dense_predict_rows(params, record.transpose(), mask.transpose()).row(0).transpose();
}

ad::Var dense_forward_batch(ad::Tape& tape, const DenseParams& params, std::span<const ad::Var> vars,
                            const Matrix& records, const MaskMatrix& masks) {
  if (records.cols() != params.spec.attributes) {
    throw ShapeError("dense: records have " + std::to_string(records.cols()) +
                     " attributes, network expects " + std::to_string(params.spec.attributes));
  }
  std::size_t offset = 0;
  const auto layers = bind_layers(params.network, vars, offset);
  if (offset != vars.size()) throw ShapeError("dense: variable count mismatch");
  return mlp_forward(layers, tape.constant(masked_inputs(records, masks)), Activation::Tanh);
}

void save_dense(const DenseParams& params, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = "dense";
  j["seed"] = params.seed;
  j["spec"] = {{"attributes", params.spec.attributes},
               {"hidden", params.spec.hidden},
               {"outputs", params.spec.outputs},
               {"l2", params.spec.l2},
               {"activation", "tanh"}};
  j["table"] = io::table_info_to_json(params.info);
  j["scaler"] = io::scaler_to_json(params.scaler);
  j["network"] = io::paramset_to_json(params.network);
  io::write_json_file(j, path);
}

DenseParams load_dense(const std::string& path) {
  const nlohmann::json j = io::read_model_json(path, "dense");
  try {
    DenseParams p;
    const auto& spec = j.at("spec");
    p.spec.attributes = spec.at("attributes").get<Index>();
    p.spec.hidden = spec.at("hidden").get<std::vector<Index>>();
    p.spec.outputs = spec.at("outputs").get<Index>();
    p.spec.l2 = spec.at("l2").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.info = io::table_info_from_json(j.at("table"));
    p.scaler = io::scaler_from_json(j.at("scaler"));
    p.network = io::paramset_from_json(j.at("network"));
    p.spec.validate();
    if (p.network.layer_sizes() != p.spec.layer_sizes()) {
      throw LoadError(path + ": network shape does not match spec");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": malformed model file: " + e.what());
  }
}

}  // namespace tgn
