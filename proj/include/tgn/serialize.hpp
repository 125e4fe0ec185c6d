#pragma once

// JSON helpers shared by the model file formats. Matrices are stored
// row-major with explicit shapes; doubles are written in shortest round-trip
// form so load(save(x)) is bitwise exact.

#include "tgn/dataset.hpp"
#include "tgn/diffcore.hpp"

#include <json.hpp>

#include <string>

namespace tgn {
struct TableInfo;
}

namespace tgn::io {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json paramset_to_json(const ParamSet& p);
ParamSet paramset_from_json(const nlohmann::json& j);

nlohmann::json scaler_to_json(const ScalerParams& s);
ScalerParams scaler_from_json(const nlohmann::json& j);

nlohmann::json table_info_to_json(const TableInfo& info);
TableInfo table_info_from_json(const nlohmann::json& j);

void write_json_file(const nlohmann::json& j, const std::string& path);

// Parses a model file and checks schema_version and kind.
nlohmann::json read_model_json(const std::string& path, const std::string& expected_kind);

// Kind tag of a model file ("tablegraphnet" or "dense").
std::string model_kind(const std::string& path);

}  // namespace tgn::io
