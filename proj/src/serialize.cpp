#include "tgn/serialize.hpp"

#include "tgn/model.hpp"

#include <fstream>
#include <sstream>

namespace tgn::io {

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw LoadError("matrix payload does not match its declared shape");
  }
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  }
  return m;
}

nlohmann::json paramset_to_json(const ParamSet& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    nlohmann::json layer{{"weight", matrix_to_json(l.weight)}};
    if (l.bias) layer["bias"] = matrix_to_json(*l.bias);
    layers.push_back(layer);
  }
  return {{"bias", p.bias_mode == BiasMode::Learned}, {"seed", p.seed}, {"layers", layers}};
}

ParamSet paramset_from_json(const nlohmann::json& j) {
  ParamSet p;
  p.bias_mode = j.at("bias").get<bool>() ? BiasMode::Learned : BiasMode::None;
  p.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& l : j.at("layers")) {
    DenseLayer layer;
    layer.weight = matrix_from_json(l.at("weight"));
    if (l.contains("bias")) layer.bias = matrix_from_json(l.at("bias"));
    if (layer.bias.has_value() != (p.bias_mode == BiasMode::Learned)) {
      throw LoadError("layer bias presence disagrees with the network bias mode");
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

nlohmann::json scaler_to_json(const ScalerParams& s) {
  std::vector<double> lo(s.min.data(), s.min.data() + s.min.size());
  std::vector<double> hi(s.max.data(), s.max.data() + s.max.size());
  return {{"epsilon", s.epsilon}, {"min", lo}, {"max", hi}, {"present_count", s.present_count}};
}

ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams s;
  s.epsilon = j.at("epsilon").get<double>();
  const auto lo = j.at("min").get<std::vector<double>>();
  const auto hi = j.at("max").get<std::vector<double>>();
  s.present_count = j.at("present_count").get<std::vector<Index>>();
  if (lo.size() != hi.size() || lo.size() != s.present_count.size()) {
    throw LoadError("scaler arrays disagree in length");
  }
  s.min = Eigen::Map<const Vector>(lo.data(), static_cast<Index>(lo.size()));
  s.max = Eigen::Map<const Vector>(hi.data(), static_cast<Index>(hi.size()));
  return s;
}

nlohmann::json table_info_to_json(const TableInfo& info) {
  return {{"attribute_names", info.attribute_names},
          {"task", to_string(info.task)},
          {"class_values", info.class_values}};
}

TableInfo table_info_from_json(const nlohmann::json& j) {
  TableInfo info;
  info.attribute_names = j.at("attribute_names").get<std::vector<std::string>>();
  info.task = task_from_string(j.at("task").get<std::string>());
  info.class_values = j.at("class_values").get<std::vector<double>>();
  return info;
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path + ": cannot open for writing");
  out << j.dump(1) << '\n';
  if (!out) throw Error(path + ": write failed");
}

namespace {

nlohmann::json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path + ": cannot open model file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path + ": corrupt model file (" + e.what() + ")");
  }
}

}  // namespace

nlohmann::json read_model_json(const std::string& path, const std::string& expected_kind) {
  nlohmann::json j = parse_file(path);
  if (!j.is_object() || !j.contains("schema_version")) {
    throw LoadError(path + ": corrupt model file (no schema_version)");
  }
  if (!j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kModelSchemaVersion) {
    throw VersionError(path + ": unsupported schema_version " + j["schema_version"].dump() +
                       " (this build reads version " + std::to_string(kModelSchemaVersion) + ")");
  }
  const std::string kind = j.value("kind", "");
  if (kind != expected_kind) {
    throw LoadError(path + ": model kind '" + kind + "', expected '" + expected_kind + "'");
  }
  return j;
}

std::string model_kind(const std::string& path) {
  const nlohmann::json j = parse_file(path);
  if (!j.is_object() || !j.contains("kind")) throw LoadError(path + ": corrupt model file (no kind)");
  return j["kind"].get<std::string>();
}

}  // namespace tgn::io
