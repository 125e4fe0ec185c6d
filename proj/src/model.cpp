#include "tgn/model.hpp"

#include "tgn/random.hpp"
#include "tgn/serialize.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

namespace tgn {

std::string to_string(NodeFeature f) {
  return f == NodeFeature::SumOutflow ? "sum-outflow" : "sum-inflow";
}

NodeFeature node_feature_from_string(const std::string& name) {
  if (name == "sum-outflow" || name == "outflow") return NodeFeature::SumOutflow;
  if (name == "sum-inflow" || name == "inflow") return NodeFeature::SumInflow;
  throw ConfigError("unknown node feature '" + name + "' (expected sum-outflow or sum-inflow)");
}

bool ModelSpec::uses_inflow() const {
  return std::find(node_features.begin(), node_features.end(), NodeFeature::SumInflow) !=
         node_features.end();
}

std::vector<Index> ModelSpec::distance_layer_sizes() const {
  std::vector<Index> sizes{distance_input_width()};
  sizes.insert(sizes.end(), distance_hidden.begin(), distance_hidden.end());
  sizes.push_back(1);
  return sizes;
}

std::vector<Index> ModelSpec::filter_layer_sizes() const {
  std::vector<Index> sizes{filter_input_width()};
  sizes.insert(sizes.end(), filter_hidden.begin(), filter_hidden.end());
  sizes.push_back(outputs);
  return sizes;
}

void ModelSpec::validate() const {
  if (attributes < 1) throw ConfigError("model: attribute count must be >= 1");
  encoding.validate(attributes);
  if (graphs < 1) throw ConfigError("model: graph count must be >= 1");
  if (filters < 1) throw ConfigError("model: filter count must be >= 1");
  if (outputs < 1) throw ConfigError("model: output width must be >= 1");
  if (node_features.empty()) throw ConfigError("model: node feature set is empty");
  for (std::size_t i = 0; i < node_features.size(); ++i) {
    for (std::size_t j = i + 1; j < node_features.size(); ++j) {
      if (node_features[i] == node_features[j]) throw ConfigError("model: duplicate node feature");
    }
  }
  for (Index h : distance_hidden) {
    if (h < 1) throw ConfigError("model: distance layer sizes must be >= 1");
  }
  for (Index h : filter_hidden) {
    if (h < 1) throw ConfigError("model: filter layer sizes must be >= 1");
  }
  if (l2 < 0.0) throw ConfigError("model: L2 coefficient must be >= 0");
}

std::vector<Matrix*> ModelParams::parameters() {
  std::vector<Matrix*> refs;
  for (auto& net : distance_nets) {
    for (Matrix* p : parameter_refs(net)) refs.push_back(p);
  }
  for (auto& net : filters) {
    for (Matrix* p : parameter_refs(net)) refs.push_back(p);
  }
  refs.push_back(&rho0);
  return refs;
}

std::vector<Matrix> ModelParams::parameter_values() const {
  std::vector<Matrix> values;
  for (const auto& net : distance_nets) {
    for (auto& p : tgn::parameter_values(net)) values.push_back(std::move(p));
  }
  for (const auto& net : filters) {
    for (auto& p : tgn::parameter_values(net)) values.push_back(std::move(p));
  }
  values.push_back(rho0);
  return values;
}

void ModelParams::assign(std::span<const Matrix> values) {
  auto refs = parameters();
  if (refs.size() != values.size()) throw ShapeError("assign: parameter count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i]->rows() != values[i].rows() || refs[i]->cols() != values[i].cols()) {
      throw ShapeError("assign: shape mismatch at parameter " + std::to_string(i));
    }
    *refs[i] = values[i];
  }
}

std::vector<std::size_t> ModelParams::penalized() const {
  std::size_t n = 0;
  for (const auto& net : distance_nets) n += net.layers.size();
  for (const auto& net : filters) n += net.layers.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(rho0.size());
  for (const auto& net : distance_nets) n += net.parameter_count();
  for (const auto& net : filters) n += net.parameter_count();
  return n;
}

void ModelParams::validate() const {
  spec.validate();
  if (static_cast<Index>(distance_nets.size()) != spec.graphs ||
      static_cast<Index>(filters.size()) != spec.filters) {
    throw ShapeError("model: network count does not match spec");
  }
  for (const auto& net : distance_nets) {
    if (!net.bias_free()) throw ConfigError("model: distance networks must be bias-free");
    if (net.layer_sizes() != spec.distance_layer_sizes()) {
      throw ShapeError("model: distance network shape does not match spec");
    }
  }
  for (const auto& net : filters) {
    if (!net.bias_free()) throw ConfigError("model: contribution filters must be bias-free");
    if (net.layer_sizes() != spec.filter_layer_sizes()) {
      throw ShapeError("model: contribution filter shape does not match spec");
    }
  }
  if (rho0.rows() != 1 || rho0.cols() != spec.outputs) throw ShapeError("model: rho0 must be 1 x C");
}

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.spec = spec;
  p.seed = seed;
  const auto dist_sizes = spec.distance_layer_sizes();
  const auto filt_sizes = spec.filter_layer_sizes();
  for (Index j = 0; j < spec.graphs; ++j) {
    p.distance_nets.push_back(
        init_params(dist_sizes, BiasMode::None, mix_seed(seed, static_cast<std::uint64_t>(j))));
  }
  for (Index j = 0; j < spec.filters; ++j) {
    p.filters.push_back(init_params(filt_sizes, BiasMode::None,
                                    mix_seed(seed, 100000 + static_cast<std::uint64_t>(j))));
  }
  p.rho0 = Matrix::Zero(1, spec.outputs);
  return p;
}

// ---- Single-record reference path -------------------------------------------

PairRows cartesian_transform(const Vector& record, const MaskVector& mask,
                             const EncodingSpec& encoding, bool zero_on_masked_receiver) {
  const Index m = record.size();
  if (mask.size() != m) throw ShapeError("cartesian_transform: mask length differs from record");
  encoding.validate(m);
  const Index e = encoding.width;
  PairRows out;
  out.attributes = m;
  out.rows = Matrix::Zero(m * m, 2 * (e + 1));
  out.zeroed.assign(static_cast<std::size_t>(m * m), false);
  for (Index k = 0; k < m; ++k) {
    for (Index l = 0; l < m; ++l) {
      const Index r = k * m + l;
      const bool zero = !mask[k] || (zero_on_masked_receiver && !mask[l]);
      out.zeroed[static_cast<std::size_t>(r)] = zero;
      if (zero) continue;
      if (e > 0) {
        out.rows(r, k) = 1.0;
        out.rows(r, e + l) = 1.0;
      }
      out.rows(r, 2 * e) = mask[k] ? record[k] : 0.0;
      out.rows(r, 2 * e + 1) = mask[l] ? record[l] : 0.0;
    }
  }
  return out;
}

EdgeTensor edge_tensor(const ModelParams& params, const PairRows& pairs) {
  const Index m = pairs.attributes;
  if (m != params.spec.attributes || pairs.rows.cols() != params.spec.distance_input_width()) {
    throw ShapeError("edge_tensor: pair rows do not match the model spec");
  }
  EdgeTensor edges;
  for (const ParamSet& net : params.distance_nets) {
    const Matrix out = mlp_forward_rows(net, pairs.rows, Activation::Tanh);
    Matrix g(m, m);
    for (Index k = 0; k < m; ++k) {
      for (Index l = 0; l < m; ++l) g(k, l) = out(k * m + l, 0);
    }
    edges.graphs.push_back(std::move(g));
  }
  return edges;
}

std::vector<Matrix> node_features(const EdgeTensor& edges, std::span<const NodeFeature> kinds) {
  if (kinds.empty()) throw ConfigError("node_features: empty feature set");
  std::vector<Matrix> out;
  for (const Matrix& g : edges.graphs) {
    Matrix f(g.rows(), static_cast<Index>(kinds.size()));
    for (std::size_t c = 0; c < kinds.size(); ++c) {
      if (kinds[c] == NodeFeature::SumOutflow) {
        f.col(static_cast<Index>(c)) = g.rowwise().sum();
      } else {
        f.col(static_cast<Index>(c)) = g.colwise().sum().transpose();
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

Matrix pool_features(std::span<const Matrix> per_graph) {
  if (per_graph.empty()) return Matrix();
  const Index m = per_graph.front().rows();
  const Index k = per_graph.front().cols();
  Matrix pooled(m, k * static_cast<Index>(per_graph.size()));
  for (std::size_t j = 0; j < per_graph.size(); ++j) {
    if (per_graph[j].rows() != m || per_graph[j].cols() != k) {
      throw ShapeError("pool_features: inconsistent per-graph shapes");
    }
    pooled.middleCols(static_cast<Index>(j) * k, k) = per_graph[j];
  }
  return pooled;
}

Contributions contributions(const ModelParams& params, const Matrix& pooled) {
  if (pooled.cols() != params.spec.filter_input_width()) {
    throw ShapeError("contributions: pooled width " + std::to_string(pooled.cols()) +
                     " != filter input width " + std::to_string(params.spec.filter_input_width()));
  }
  Contributions c;
  c.total = Matrix::Zero(pooled.rows(), params.spec.outputs);
  for (const ParamSet& f : params.filters) {
    Matrix part = mlp_forward_rows(f, pooled, Activation::Tanh);
    c.total += part;
    c.per_filter.push_back(std::move(part));
  }
  return c;
}

Prediction predict_reference(const ModelParams& params, const Vector& record,
                             const MaskVector& mask) {
  if (record.size() != params.spec.attributes) {
    throw ShapeError("predict: record has " + std::to_string(record.size()) +
                     " attributes, model expects " + std::to_string(params.spec.attributes));
  }
  const PairRows pairs =
      cartesian_transform(record, mask, params.spec.encoding, params.spec.uses_inflow());
  const EdgeTensor edges = edge_tensor(params, pairs);
  const auto features = node_features(edges, params.spec.node_features);
  const Matrix pooled = pool_features(features);
  Contributions c = contributions(params, pooled);
  Prediction p;
  p.rho0 = params.rho0.row(0).transpose();
  p.output = p.rho0 + c.total.colwise().sum().transpose();
  p.contributions = std::move(c.total);
  p.per_filter = std::move(c.per_filter);
  return p;
}

// ---- Batched path -----------------------------------------------------------

BatchOutputs forward_batch(ad::Tape& tape, const ModelParams& params, std::span<const ad::Var> vars,
                           const Matrix& records, const MaskMatrix& masks) {
  const ModelSpec& spec = params.spec;
  const Index m = spec.attributes;
  const Index b = records.rows();
  if (records.cols() != m || masks.rows() != b || masks.cols() != m) {
    throw ShapeError("forward_batch: records/masks do not match the model (" +
                     std::to_string(records.cols()) + " attributes, expected " +
                     std::to_string(m) + ")");
  }
  const bool receiver_rule = spec.uses_inflow();

  // Active pairs: zeroed rows contribute exactly zero edges and are skipped.
  std::vector<Index> src;
  std::vector<Index> dst;
  std::vector<Index> out_seg;
  std::vector<Index> in_seg;
  for (Index r = 0; r < b; ++r) {
    for (Index k = 0; k < m; ++k) {
      if (!masks(r, k)) continue;
      for (Index l = 0; l < m; ++l) {
        if (receiver_rule && !masks(r, l)) continue;
        src.push_back(k);
        dst.push_back(l);
        out_seg.push_back(r * m + k);
        in_seg.push_back(r * m + l);
      }
    }
  }
  const Index pairs = static_cast<Index>(src.size());
  auto batch = std::make_shared<ad::PairBatch>();
  batch->xs.resize(pairs);
  batch->xd.resize(pairs);
  for (Index p = 0; p < pairs; ++p) {
    const Index r = out_seg[static_cast<std::size_t>(p)] / m;
    const Index k = src[static_cast<std::size_t>(p)];
    const Index l = dst[static_cast<std::size_t>(p)];
    batch->xs[p] = records(r, k);
    batch->xd[p] = masks(r, l) ? records(r, l) : 0.0;
  }
  batch->src = std::move(src);
  batch->dst = std::move(dst);
  batch->enc_width = spec.encoding.width;

  std::size_t offset = 0;
  std::vector<ad::Var> features;
  for (const ParamSet& net : params.distance_nets) {
    const auto layers = bind_layers(net, vars, offset);
    ad::Var edges;
    if (pairs == 0) {
      edges = tape.constant(Matrix::Zero(0, 1));
    } else {
      std::vector<ad::Var> weights;
      for (const auto& layer : layers) weights.push_back(layer.weight);
      edges = ad::pair_mlp(weights, batch);
    }
    for (NodeFeature kind : spec.node_features) {
      if (pairs == 0) {
        features.push_back(tape.constant(Matrix::Zero(b * m, 1)));
      } else if (kind == NodeFeature::SumOutflow) {
        features.push_back(ad::segment_sum(edges, out_seg, b * m));
      } else {
        features.push_back(ad::segment_sum(edges, in_seg, b * m));
      }
    }
  }
  ad::Var pooled = features.size() == 1 ? features.front() : ad::hconcat(features);

  BatchOutputs out;
  ad::Var total;
  for (const ParamSet& net : params.filters) {
    const auto layers = bind_layers(net, vars, offset);
    ad::Var part = mlp_forward(layers, pooled, Activation::Tanh);
    out.per_filter.push_back(part);
    total = total.valid() ? ad::add(total, part) : part;
  }
  if (offset + 1 != vars.size()) throw ShapeError("forward_batch: variable count mismatch");
  ad::Var rho0 = vars[offset];
  out.contributions = total;
  std::vector<Index> record_seg(static_cast<std::size_t>(b * m));
  for (Index i = 0; i < b * m; ++i) record_seg[static_cast<std::size_t>(i)] = i / m;
  out.output = ad::add_row(ad::segment_sum(total, std::move(record_seg), b), rho0);
  return out;
}

std::vector<Prediction> predict_rows(const ModelParams& params, const Matrix& records,
                                     const MaskMatrix& masks, bool keep_per_filter) {
  const Index m = params.spec.attributes;
  if (records.cols() != m) {
    throw ShapeError("predict: records have " + std::to_string(records.cols()) +
                     " attributes, model expects " + std::to_string(m));
  }
  const auto values = params.parameter_values();
  std::vector<Prediction> result;
  result.reserve(static_cast<std::size_t>(records.rows()));
  // Bounded chunks keep tape memory flat for wide tables.
  const Index pairs_per_record = std::max<Index>(1, m * m * params.spec.graphs);
  const Index chunk = std::max<Index>(1, 400000 / pairs_per_record);
  for (Index start = 0; start < records.rows(); start += chunk) {
    const Index n = std::min(chunk, records.rows() - start);
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& v : values) vars.push_back(tape.constant(v));
    const BatchOutputs out =
        forward_batch(tape, params, vars, records.middleRows(start, n), masks.middleRows(start, n));
    const Matrix& output = out.output.value();
    const Matrix& contrib = out.contributions.value();
    for (Index r = 0; r < n; ++r) {
      Prediction p;
      p.rho0 = params.rho0.row(0).transpose();
      p.output = output.row(r).transpose();
      p.contributions = contrib.middleRows(r * m, m);
      if (keep_per_filter) {
        for (const ad::Var& f : out.per_filter) p.per_filter.push_back(f.value().middleRows(r * m, m));
      }
      result.push_back(std::move(p));
    }
  }
  return result;
}

Prediction predict(const ModelParams& params, const Vector& record, const MaskVector& mask,
                   bool keep_per_filter) {
  if (record.size() != params.spec.attributes || mask.size() != record.size()) {
    throw ShapeError("predict: record has " + std::to_string(record.size()) +
                     " attributes, model expects " + std::to_string(params.spec.attributes));
  }
  auto rows = predict_rows(params, record.transpose(), mask.transpose(), keep_per_filter);
  return std::move(rows.front());
}

ModelParams permute_attributes(const ModelParams& params, std::span<const Index> perm) {
  const Index m = params.spec.attributes;
  if (static_cast<Index>(perm.size()) != m) throw ShapeError("permute_attributes: wrong length");
  std::vector<bool> seen(static_cast<std::size_t>(m), false);
  for (Index p : perm) {
    if (p < 0 || p >= m || seen[static_cast<std::size_t>(p)]) {
      throw InputError("permute_attributes: not a permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  ModelParams out = params;
  const Index e = params.spec.encoding.width;
  if (e > 0) {
    for (std::size_t j = 0; j < params.distance_nets.size(); ++j) {
      const Matrix& w = params.distance_nets[j].layers.front().weight;
      Matrix& nw = out.distance_nets[j].layers.front().weight;
      for (Index p = 0; p < m; ++p) {
        nw.row(p) = w.row(perm[static_cast<std::size_t>(p)]);
        nw.row(e + p) = w.row(e + perm[static_cast<std::size_t>(p)]);
      }
    }
  }
  if (params.scaler.fitted()) {
    for (Index p = 0; p < m; ++p) {
      const Index from = perm[static_cast<std::size_t>(p)];
      out.scaler.min[p] = params.scaler.min[from];
      out.scaler.max[p] = params.scaler.max[from];
      out.scaler.present_count[static_cast<std::size_t>(p)] =
          params.scaler.present_count[static_cast<std::size_t>(from)];
    }
  }
  if (static_cast<Index>(params.info.attribute_names.size()) == m) {
    for (Index p = 0; p < m; ++p) {
      out.info.attribute_names[static_cast<std::size_t>(p)] =
          params.info.attribute_names[static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
    }
  }
  return out;
}

// ---- Persistence ------------------------------------------------------------

void save_model(const ModelParams& params, const std::string& path) {
  params.validate();
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = "tablegraphnet";
  j["seed"] = params.seed;
  const ModelSpec& s = params.spec;
  nlohmann::json spec;
  spec["attributes"] = s.attributes;
  spec["encoding"] = to_string(s.encoding.kind);
  spec["encoding_width"] = s.encoding.width;
  spec["graphs"] = s.graphs;
  spec["distance_hidden"] = s.distance_hidden;
  spec["filters"] = s.filters;
  spec["filter_hidden"] = s.filter_hidden;
  spec["outputs"] = s.outputs;
  std::vector<std::string> kinds;
  for (NodeFeature f : s.node_features) kinds.push_back(to_string(f));
  spec["node_features"] = kinds;
  spec["l2"] = s.l2;
  spec["activation"] = "tanh";
  j["spec"] = spec;
  j["table"] = io::table_info_to_json(params.info);
  j["scaler"] = io::scaler_to_json(params.scaler);
  j["rho0"] = io::matrix_to_json(params.rho0);
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& n : params.distance_nets) nets.push_back(io::paramset_to_json(n));
  j["distance_nets"] = nets;
  nlohmann::json filters = nlohmann::json::array();
  for (const auto& n : params.filters) filters.push_back(io::paramset_to_json(n));
  j["filters"] = filters;
  io::write_json_file(j, path);
}

ModelParams load_model(const std::string& path) {
  const nlohmann::json j = io::read_model_json(path, "tablegraphnet");
  try {
    ModelParams p;
    const auto& spec = j.at("spec");
    ModelSpec& s = p.spec;
    s.attributes = spec.at("attributes").get<Index>();
    s.encoding.kind = encoding_from_string(spec.at("encoding").get<std::string>());
    s.encoding.width = spec.at("encoding_width").get<Index>();
    s.graphs = spec.at("graphs").get<Index>();
    s.distance_hidden = spec.at("distance_hidden").get<std::vector<Index>>();
    s.filters = spec.at("filters").get<Index>();
    s.filter_hidden = spec.at("filter_hidden").get<std::vector<Index>>();
    s.outputs = spec.at("outputs").get<Index>();
    s.node_features.clear();
    for (const auto& k : spec.at("node_features")) {
      s.node_features.push_back(node_feature_from_string(k.get<std::string>()));
    }
    s.l2 = spec.at("l2").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.info = io::table_info_from_json(j.at("table"));
    p.scaler = io::scaler_from_json(j.at("scaler"));
    p.rho0 = io::matrix_from_json(j.at("rho0"));
    for (const auto& n : j.at("distance_nets")) p.distance_nets.push_back(io::paramset_from_json(n));
    for (const auto& n : j.at("filters")) p.filters.push_back(io::paramset_from_json(n));
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": malformed model file: " + e.what());
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(path + ": inconsistent model file: " + e.what());
  }
}

}  // namespace tgn
