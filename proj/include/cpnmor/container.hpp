#pragma once

#include "cpnmor/baselines.hpp"
#include "cpnmor/cpn.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace cpnmor {

enum class ModelMethod { Cpn, Linear, Quadratic };

const char* to_string(ModelMethod m);
ModelMethod model_method_from_string(const std::string& s);

/// On-disk model: a directory holding manifest.json and blob.bin. The
/// manifest describes every array stored in the blob by name, dtype, byte
/// offset and shape; all numeric model state lives in the blob so that a
/// load reproduces the fitted model bit for bit.
struct ModelContainer {
  ModelMethod method = ModelMethod::Cpn;
  std::optional<CpnModel> cpn;        // Cpn and Linear
  std::optional<QuadraticModel> quadratic;
  std::optional<Eigen::VectorXd> norm_weights;
  nlohmann::json metrics = nlohmann::json::object();
  std::string created;  // informational timestamp

  XGeometry geometry() const;
  Eigen::Index dim_state() const;
  int n() const;
  Eigen::MatrixXd encode_all(const Eigen::Ref<const Eigen::MatrixXd>& states) const;
  Eigen::MatrixXd decode_all(const Eigen::Ref<const Eigen::MatrixXd>& a) const;
};

inline constexpr int kContainerVersion = 1;

void save_model(const ModelContainer& model, const std::filesystem::path& dir);
ModelContainer load_model(const std::filesystem::path& dir);

/// Manifest document as written by save_model (without touching disk).
nlohmann::json manifest_of(const ModelContainer& model);

nlohmann::json to_json(const FitConfig& cfg);
FitConfig fit_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const std::vector<TraceStep>& trace);

}  // namespace cpnmor
