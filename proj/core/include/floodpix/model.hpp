#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "floodpix/raster_io.hpp"

namespace floodpix {

/// Non-owning row-major N x d view over pixel features.
struct FeatureView {
  std::span<const float> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  FeatureView() = default;
  FeatureView(std::span<const float> v, std::size_t r, std::size_t c) : values(v), rows(r), cols(c) {}

  std::span<const float> row(std::size_t i) const { return values.subspan(i * cols, cols); }
  float operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

enum class ModelKind { NaiveBayes, LDA, QDA, LinearSGD, GBDT };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Shared train-once / predict-many contract of every pixel classifier.
/// Fitted models are immutable.
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t dimensionality() const = 0;

  /// Real-valued score whose sign decides the class: Water iff > 0.
  virtual std::vector<double> decision_function(FeatureView x) const = 0;

  /// Per-row {P(dry), P(water)}.
  virtual std::vector<std::array<double, 2>> predict_proba(FeatureView x) const = 0;

  std::vector<io::Label> predict(FeatureView x) const;

  virtual nlohmann::json to_json() const = 0;

 protected:
  void check_dimensionality(const FeatureView& x) const;
};

/// Reconstructs any model serialized by Model::to_json().
std::unique_ptr<Model> model_from_json(const nlohmann::json& doc);

}  // namespace floodpix
