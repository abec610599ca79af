#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "floodpix/model.hpp"

namespace floodpix::gbdt {

using io::Label;

inline constexpr int kMaxBins = 256;

/// Quantile bin thresholds per feature plus the 8-bit bin id of every row.
/// A value x lands in the first bin b with x <= thresholds[b], or in the
/// last bin when it exceeds every threshold.
struct BinIndex {
  std::size_t rows = 0;
  std::size_t features = 0;
  std::vector<std::vector<double>> thresholds;
  std::vector<std::uint8_t> bins;  // row-major rows x features

  std::size_t bin_count(std::size_t f) const { return thresholds[f].size() + 1; }
  std::uint8_t at(std::size_t row, std::size_t f) const { return bins[row * features + f]; }
};

/// Thresholds come from at most `sample_rows` rows drawn with `seed`; when
/// the data has fewer rows all of them are used and no draw happens.
BinIndex bin_features(FeatureView x, int max_bins = kMaxBins, std::size_t sample_rows = std::size_t{1} << 20,
                      std::uint64_t seed = 0);

/// Bin id of a raw value against sorted thresholds.
std::uint8_t bin_of(std::span<const double> thresholds, double value);

struct GradHess {
  std::vector<double> grad;
  std::vector<double> hess;
};

/// Log-loss of one row: y in {0, 1}, margin in log-odds.
double logistic_loss(double margin, double y);
GradHess logistic_grad_hess(std::span<const double> margins, std::span<const Label> labels);

struct SplitCandidate {
  std::uint32_t feature = 0;
  std::uint32_t bin = 0;  // rows with bin id <= bin go left
  double gain = 0.0;
  double grad_left = 0.0, hess_left = 0.0;
  double grad_right = 0.0, hess_right = 0.0;
  std::size_t count_left = 0, count_right = 0;
};

/// Gain of splitting (G, H) into (GL, HL) and (G-GL, H-HL).
double split_gain(double grad_left, double hess_left, double grad, double hess, double lambda);

/// Best split over every (feature, bin) for the given rows. Near-ties,
/// within a relative 1e-12, resolve to the lowest feature and then the
/// lowest bin. Empty when no candidate has positive gain.
std::optional<SplitCandidate> find_best_split(std::span<const std::uint32_t> rows, const GradHess& gh,
                                              const BinIndex& bins, double lambda);

/// Flat tree. Leaves carry feature == -1.
struct TreeNode {
  std::int32_t feature = -1;
  std::uint32_t bin = 0;
  double threshold = 0.0;
  double gain = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_count() const;
  double predict(std::span<const float> row) const;
  /// Walks the tree on pre-binned data; agrees with predict() on the rows
  /// the bins were built from.
  double predict_binned(const BinIndex& bins, std::size_t row) const;
};

/// Best-first growth: the frontier leaf with the largest gain is split
/// until `max_leaves` leaves exist or nothing has positive gain. Leaf value
/// is -G/(H + lambda).
Tree grow_tree_leafwise(std::span<const std::uint32_t> rows, const GradHess& gh, const BinIndex& bins, int max_leaves,
                        double lambda);

struct GBDTParams {
  int n_trees = 100;
  int max_leaves = 32;
  double lambda = 1.0;
  double learning_rate = 0.1;
  /// Rows drawn per iteration without replacement; 0 or >= N uses all rows.
  std::size_t subsample_size = 0;
  int max_bins = kMaxBins;
  std::size_t bin_sample_rows = std::size_t{1} << 20;
  std::uint64_t seed = 0;
  /// Worker threads for histogram construction.
  int threads = 1;
};

nlohmann::json to_json(const GBDTParams& p);
GBDTParams gbdt_params_from_json(const nlohmann::json& j);

class GBDTModel final : public Model {
 public:
  GBDTModel(double base_score, std::vector<Tree> trees, GBDTParams params, std::size_t dims,
            std::vector<std::vector<double>> bin_thresholds, std::vector<double> training_loss = {});

  ModelKind kind() const override { return ModelKind::GBDT; }
  std::size_t dimensionality() const override { return dims_; }
  std::vector<double> decision_function(FeatureView x) const override;
  std::vector<std::array<double, 2>> predict_proba(FeatureView x) const override;
  nlohmann::json to_json() const override;
  static GBDTModel from_json(const nlohmann::json& j);

  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const GBDTParams& params() const { return params_; }
  const std::vector<std::vector<double>>& bin_thresholds() const { return bin_thresholds_; }
  /// Mean training log-loss after each boosting iteration.
  std::span<const double> training_loss() const { return training_loss_; }

 private:
  double base_score_;
  std::vector<Tree> trees_;
  GBDTParams params_;
  std::size_t dims_;
  std::vector<std::vector<double>> bin_thresholds_;
  std::vector<double> training_loss_;
};

/// Throws FitError on single-class data, InvalidArgument on bad params.
GBDTModel fit_gbdt(FeatureView x, std::span<const Label> y, const GBDTParams& params);

struct GBDTPrediction {
  std::vector<Label> labels;
  std::vector<double> margins;
};
GBDTPrediction predict_gbdt(const GBDTModel& model, FeatureView x);

/// Leaf-count grid by feature-space dimensionality.
std::vector<int> max_leaves_grid(std::size_t dims);

nlohmann::json tree_to_json(const Tree& tree);
Tree tree_from_json(const nlohmann::json& j);

}  // namespace floodpix::gbdt
