#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "floodpix/model.hpp"

namespace floodpix::classifiers {

using io::Label;

/// Optional class priors {dry, water}; any positive scale, normalized on use.
using Priors = std::optional<std::array<double, 2>>;

/// Gaussian Naive Bayes: independent univariate Gaussians per class.
class GaussianNB final : public Model {
 public:
  GaussianNB(std::array<double, 2> priors, std::vector<double> means, std::vector<double> variances, std::size_t dims);

  ModelKind kind() const override { return ModelKind::NaiveBayes; }
  std::size_t dimensionality() const override { return dims_; }
  std::vector<double> decision_function(FeatureView x) const override;
  std::vector<std::array<double, 2>> predict_proba(FeatureView x) const override;
  nlohmann::json to_json() const override;
  static GaussianNB from_json(const nlohmann::json& j);

  const std::array<double, 2>& priors() const { return priors_; }
  /// Row-major 2 x d, row 0 = Dry.
  std::span<const double> means() const { return means_; }
  std::span<const double> variances() const { return variances_; }

 private:
  std::array<double, 2> joint_log_likelihood(std::span<const float> row) const;

  std::array<double, 2> priors_;
  std::vector<double> means_;
  std::vector<double> variances_;
  std::size_t dims_;
};

/// Linear discriminant analysis with a shared, shrunk covariance. The
/// log-odds are affine in x and stored as weights + intercept.
class LDA final : public Model {
 public:
  LDA(std::array<double, 2> priors, std::vector<double> means, std::vector<double> covariance, double shrinkage,
      std::size_t dims);

  ModelKind kind() const override { return ModelKind::LDA; }
  std::size_t dimensionality() const override { return dims_; }
  std::vector<double> decision_function(FeatureView x) const override;
  std::vector<std::array<double, 2>> predict_proba(FeatureView x) const override;
  nlohmann::json to_json() const override;
  static LDA from_json(const nlohmann::json& j);

  const std::array<double, 2>& priors() const { return priors_; }
  std::span<const double> means() const { return means_; }
  /// Shrunk covariance, row-major d x d.
  std::span<const double> covariance() const { return covariance_; }
  std::span<const double> weights() const { return weights_; }
  double intercept() const { return intercept_; }
  double shrinkage() const { return shrinkage_; }

 private:
  std::array<double, 2> priors_;
  std::vector<double> means_;
  std::vector<double> covariance_;
  double shrinkage_;
  std::size_t dims_;
  std::vector<double> weights_;
  double intercept_ = 0.0;
};

/// Quadratic discriminant analysis on globally standardized features with
/// per-class covariances regularized toward the identity.
class QDA final : public Model {
 public:
  /// `covariances` holds two row-major d x d matrices (Dry, Water) already
  /// regularized; throws FitError when either is not positive definite.
  QDA(std::array<double, 2> priors, std::vector<double> means, std::vector<double> covariances,
      std::vector<double> offset, std::vector<double> scale, double reg_param, std::size_t dims);

  ModelKind kind() const override { return ModelKind::QDA; }
  std::size_t dimensionality() const override { return dims_; }
  std::vector<double> decision_function(FeatureView x) const override;
  std::vector<std::array<double, 2>> predict_proba(FeatureView x) const override;
  nlohmann::json to_json() const override;
  static QDA from_json(const nlohmann::json& j);

  double reg_param() const { return reg_param_; }
  std::span<const double> covariances() const { return covariances_; }
  std::span<const double> offset() const { return offset_; }
  std::span<const double> scale() const { return scale_; }

 private:
  std::array<double, 2> joint_log_likelihood(std::span<const float> row) const;

  std::array<double, 2> priors_;
  std::vector<double> means_;        // standardized space, 2 x d
  std::vector<double> covariances_;  // 2 x d x d
  std::vector<double> offset_;       // standardization mean
  std::vector<double> scale_;        // standardization std
  double reg_param_;
  std::size_t dims_;
  std::array<std::vector<double>, 2> chol_;  // lower Cholesky factors
  std::array<double, 2> log_det_{};
};

enum class BayesKind { NaiveBayes, LDA, QDA };

struct BayesHyper {
  double shrinkage = 0.0;  // LDA rho in [0, 1]
  double reg_param = 0.0;  // QDA r
  Priors priors;           // empirical class frequencies when empty
};

GaussianNB fit_naive_bayes(FeatureView x, std::span<const Label> y, const Priors& priors = std::nullopt);
LDA fit_lda(FeatureView x, std::span<const Label> y, double shrinkage, const Priors& priors = std::nullopt);
QDA fit_qda(FeatureView x, std::span<const Label> y, double reg_param, const Priors& priors = std::nullopt);

/// Throws FitError for single-class data, too few rows (N <= d for LDA and
/// QDA), or a covariance that is singular after regularization.
std::unique_ptr<Model> fit_bayes(BayesKind kind, FeatureView x, std::span<const Label> y, const BayesHyper& hyper);

enum class SgdLoss { Hinge, Logistic, ModifiedHuber };

std::string_view sgd_loss_name(SgdLoss loss);
SgdLoss parse_sgd_loss(std::string_view name);

struct SgdSchedule {
  double initial_rate = 0.01;
  double decay = 0.5;
  int patience = 2;
  int min_epochs = 5;
  int max_epochs = 20;
  double min_rate = 1e-6;
  /// An epoch counts as an improvement when its loss drops below
  /// best - tolerance.
  double tolerance = 1e-4;
};

struct SgdParams {
  SgdLoss loss = SgdLoss::Hinge;
  double alpha = 1e-4;
  bool rebalance = false;
  std::uint64_t seed = 0;
  SgdSchedule schedule;
};

/// Linear model w.x + b trained by single-sample SGD.
class LinearSGD final : public Model {
 public:
  LinearSGD(std::vector<double> weights, double bias, SgdParams params, std::array<double, 2> class_weights,
            int epochs, std::vector<double> epoch_losses);

  ModelKind kind() const override { return ModelKind::LinearSGD; }
  std::size_t dimensionality() const override { return weights_.size(); }
  std::vector<double> decision_function(FeatureView x) const override;
  std::vector<std::array<double, 2>> predict_proba(FeatureView x) const override;
  nlohmann::json to_json() const override;
  static LinearSGD from_json(const nlohmann::json& j);

  std::span<const double> weights() const { return weights_; }
  double bias() const { return bias_; }
  const SgdParams& params() const { return params_; }
  const std::array<double, 2>& class_weights() const { return class_weights_; }
  int epochs() const { return epochs_; }
  /// Weighted mean loss plus L2 penalty after each epoch.
  std::span<const double> epoch_losses() const { return epoch_losses_; }

 private:
  std::vector<double> weights_;
  double bias_;
  SgdParams params_;
  std::array<double, 2> class_weights_;
  int epochs_;
  std::vector<double> epoch_losses_;
};

/// Loss value and its derivative with respect to the margin, for y in {-1, +1}.
double sgd_loss(SgdLoss loss, double margin, double y);
double sgd_dloss(SgdLoss loss, double margin, double y);

/// Throws FitError on empty or single-class data and when the loss diverges.
LinearSGD fit_sgd(FeatureView x, std::span<const Label> y, const SgdParams& params);

}  // namespace floodpix::classifiers
