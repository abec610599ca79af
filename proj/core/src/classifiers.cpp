#include "floodpix/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "floodpix/error.hpp"
#include "floodpix/rng.hpp"

namespace floodpix::classifiers {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kFormatVersion = 1;

struct ClassSplit {
  std::array<std::size_t, 2> counts{};
};

ClassSplit count_classes(FeatureView x, std::span<const Label> y) {
  if (x.rows != y.size()) throw InvalidArgument("feature rows and labels differ in length");
  ClassSplit s;
  for (Label l : y) {
    if (l == Label::NoData) throw InvalidArgument("training labels must be Dry or Water");
    ++s.counts[l == Label::Water ? 1 : 0];
  }
  return s;
}

void require_both_classes(const ClassSplit& s) {
  if (s.counts[0] == 0 || s.counts[1] == 0) throw FitError("training data contains a single class");
}

std::array<double, 2> resolve_priors(const Priors& priors, const ClassSplit& s) {
  std::array<double, 2> p{};
  if (priors) {
    p = *priors;
    if (!(p[0] > 0.0 && p[1] > 0.0)) throw InvalidArgument("class priors must be positive");
  } else {
    p = {static_cast<double>(s.counts[0]), static_cast<double>(s.counts[1])};
  }
  const double sum = p[0] + p[1];
  return {p[0] / sum, p[1] / sum};
}

// Class means, row-major 2 x d.
std::vector<double> class_means(FeatureView x, std::span<const Label> y, const ClassSplit& s) {
  const std::size_t d = x.cols;
  std::vector<double> means(2 * d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::size_t k = y[i] == Label::Water ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) means[k * d + j] += x(i, j);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < d; ++j) means[k * d + j] /= static_cast<double>(s.counts[k]);
  }
  return means;
}

std::array<double, 2> softmax2(const std::array<double, 2>& jll) {
  const double m = std::max(jll[0], jll[1]);
  const double e0 = std::exp(jll[0] - m);
  const double e1 = std::exp(jll[1] - m);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

std::array<double, 2> logistic_pair(double margin) {
  // Each probability is evaluated in its numerically stable branch.
  auto sig = [](double m) {
    if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
    const double e = std::exp(m);
    return e / (1.0 + e);
  };
  return {sig(-margin), sig(margin)};
}

Eigen::LLT<MatrixXd> checked_cholesky(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw FitError(std::string(what) + " is not positive definite");
  const MatrixXd l = llt.matrixL();
  const double scale = std::max(m.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((l.diagonal().array().square() <= 1e-13 * scale).any()) {
    throw FitError(std::string(what) + " is numerically singular");
  }
  return llt;
}

MatrixXd to_matrix(std::span<const double> v, std::size_t d) {
  MatrixXd m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = v[i * d + j];
  }
  return m;
}

std::vector<double> from_matrix(const MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.rows() * m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  }
  return v;
}

nlohmann::json header(ModelKind kind) {
  return {{"format", "floodpix-model"}, {"version", kFormatVersion}, {"kind", std::string(model_kind_name(kind))}};
}

void check_header(const nlohmann::json& j, ModelKind kind) {
  if (j.value("format", std::string{}) != "floodpix-model") throw InvalidArgument("not a floodpix model document");
  if (j.value("version", 0) != kFormatVersion) throw InvalidArgument("unsupported model document version");
  if (j.value("kind", std::string{}) != model_kind_name(kind)) throw InvalidArgument("model kind mismatch");
}

template <typename F>
std::vector<double> map_rows(FeatureView x, F&& f) {
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = f(x.row(i));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- GaussianNB

GaussianNB::GaussianNB(std::array<double, 2> priors, std::vector<double> means, std::vector<double> variances,
                       std::size_t dims)
    : priors_(priors), means_(std::move(means)), variances_(std::move(variances)), dims_(dims) {
  if (means_.size() != 2 * dims_ || variances_.size() != 2 * dims_) throw InvalidArgument("NB parameter shape");
  for (double v : variances_) {
    if (!(v > 0.0)) throw FitError("NB variance must be positive");
  }
}

std::array<double, 2> GaussianNB::joint_log_likelihood(std::span<const float> row) const {
  std::array<double, 2> jll{};
  for (std::size_t k = 0; k < 2; ++k) {
    double s = std::log(priors_[k]);
    for (std::size_t j = 0; j < dims_; ++j) {
      const double var = variances_[k * dims_ + j];
      const double diff = row[j] - means_[k * dims_ + j];
      s -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + diff * diff / var);
    }
    jll[k] = s;
  }
  return jll;
}

std::vector<double> GaussianNB::decision_function(FeatureView x) const {
  check_dimensionality(x);
  return map_rows(x, [&](std::span<const float> r) {
    const auto jll = joint_log_likelihood(r);
    return jll[1] - jll[0];
  });
}

std::vector<std::array<double, 2>> GaussianNB::predict_proba(FeatureView x) const {
  check_dimensionality(x);
  std::vector<std::array<double, 2>> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = softmax2(joint_log_likelihood(x.row(i)));
  return out;
}

nlohmann::json GaussianNB::to_json() const {
  auto j = header(kind());
  j["dims"] = dims_;
  j["priors"] = priors_;
  j["means"] = means_;
  j["variances"] = variances_;
  return j;
}

GaussianNB GaussianNB::from_json(const nlohmann::json& j) {
  check_header(j, ModelKind::NaiveBayes);
  return GaussianNB(j.at("priors").get<std::array<double, 2>>(), j.at("means").get<std::vector<double>>(),
                    j.at("variances").get<std::vector<double>>(), j.at("dims").get<std::size_t>());
}

GaussianNB fit_naive_bayes(FeatureView x, std::span<const Label> y, const Priors& priors) {
  const ClassSplit split = count_classes(x, y);
  require_both_classes(split);
  const std::size_t d = x.cols;
  auto means = class_means(x, y, split);
  std::vector<double> vars(2 * d, 0.0);
  std::vector<double> total_mean(d, 0.0), total_var(d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::size_t k = y[i] == Label::Water ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(i, j) - means[k * d + j];
      vars[k * d + j] += diff * diff;
      total_mean[j] += x(i, j);
    }
  }
  for (std::size_t j = 0; j < d; ++j) total_mean[j] /= static_cast<double>(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(i, j) - total_mean[j];
      total_var[j] += diff * diff;
    }
  }
  double max_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) max_var = std::max(max_var, total_var[j] / static_cast<double>(x.rows));
  const double epsilon = 1e-9 * (max_var > 0.0 ? max_var : 1.0);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      vars[k * d + j] = vars[k * d + j] / static_cast<double>(split.counts[k]) + epsilon;
    }
  }
  return GaussianNB(resolve_priors(priors, split), std::move(means), std::move(vars), d);
}

// ---------------------------------------------------------------------- LDA

LDA::LDA(std::array<double, 2> priors, std::vector<double> means, std::vector<double> covariance, double shrinkage,
         std::size_t dims)
    : priors_(priors), means_(std::move(means)), covariance_(std::move(covariance)), shrinkage_(shrinkage), dims_(dims) {
  if (means_.size() != 2 * dims_ || covariance_.size() != dims_ * dims_) throw InvalidArgument("LDA parameter shape");
  const MatrixXd cov = to_matrix(covariance_, dims_);
  const auto llt = checked_cholesky(cov, "LDA covariance");
  const Eigen::Map<const VectorXd> mu0(means_.data(), static_cast<Eigen::Index>(dims_));
  const Eigen::Map<const VectorXd> mu1(means_.data() + dims_, static_cast<Eigen::Index>(dims_));
  const VectorXd w = llt.solve(mu1 - mu0);
  weights_.assign(w.data(), w.data() + w.size());
  intercept_ = -0.5 * (mu1 + mu0).dot(w) + std::log(priors_[1] / priors_[0]);
}

std::vector<double> LDA::decision_function(FeatureView x) const {
  check_dimensionality(x);
  return map_rows(x, [&](std::span<const float> r) {
    double m = intercept_;
    for (std::size_t j = 0; j < dims_; ++j) m += weights_[j] * r[j];
    return m;
  });
}

std::vector<std::array<double, 2>> LDA::predict_proba(FeatureView x) const {
  const auto m = decision_function(x);
  std::vector<std::array<double, 2>> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = logistic_pair(m[i]);
  return out;
}

nlohmann::json LDA::to_json() const {
  auto j = header(kind());
  j["dims"] = dims_;
  j["priors"] = priors_;
  j["means"] = means_;
  j["covariance"] = covariance_;
  j["shrinkage"] = shrinkage_;
  return j;
}

LDA LDA::from_json(const nlohmann::json& j) {
  check_header(j, ModelKind::LDA);
  return LDA(j.at("priors").get<std::array<double, 2>>(), j.at("means").get<std::vector<double>>(),
             j.at("covariance").get<std::vector<double>>(), j.at("shrinkage").get<double>(),
             j.at("dims").get<std::size_t>());
}

LDA fit_lda(FeatureView x, std::span<const Label> y, double shrinkage, const Priors& priors) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw InvalidArgument("LDA shrinkage must lie in [0, 1]");
  const ClassSplit split = count_classes(x, y);
  require_both_classes(split);
  const std::size_t d = x.cols;
  if (x.rows <= d) throw FitError("LDA needs more rows than features");
  auto means = class_means(x, y, split);
  MatrixXd cov = MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  VectorXd diff(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::size_t k = y[i] == Label::Water ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) diff[static_cast<Eigen::Index>(j)] = x(i, j) - means[k * d + j];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(diff);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(x.rows);
  const double mu = cov.trace() / static_cast<double>(d);
  MatrixXd shrunk = (1.0 - shrinkage) * cov;
  shrunk.diagonal().array() += shrinkage * mu;
  return LDA(resolve_priors(priors, split), std::move(means), from_matrix(shrunk), shrinkage, d);
}

// ---------------------------------------------------------------------- QDA

QDA::QDA(std::array<double, 2> priors, std::vector<double> means, std::vector<double> covariances,
         std::vector<double> offset, std::vector<double> scale, double reg_param, std::size_t dims)
    : priors_(priors),
      means_(std::move(means)),
      covariances_(std::move(covariances)),
      offset_(std::move(offset)),
      scale_(std::move(scale)),
      reg_param_(reg_param),
      dims_(dims) {
  if (means_.size() != 2 * dims_ || covariances_.size() != 2 * dims_ * dims_ || offset_.size() != dims_ ||
      scale_.size() != dims_) {
    throw InvalidArgument("QDA parameter shape");
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const MatrixXd cov = to_matrix(std::span<const double>(covariances_).subspan(k * dims_ * dims_, dims_ * dims_), dims_);
    const auto llt = checked_cholesky(cov, k == 0 ? "QDA dry-class covariance" : "QDA water-class covariance");
    const MatrixXd l = llt.matrixL();
    chol_[k] = from_matrix(l);
    log_det_[k] = 2.0 * l.diagonal().array().log().sum();
  }
}

std::array<double, 2> QDA::joint_log_likelihood(std::span<const float> row) const {
  std::array<double, 2> jll{};
  VectorXd z(static_cast<Eigen::Index>(dims_));
  for (std::size_t j = 0; j < dims_; ++j) z[static_cast<Eigen::Index>(j)] = (row[j] - offset_[j]) / scale_[j];
  for (std::size_t k = 0; k < 2; ++k) {
    // Forward substitution L u = z - mu gives the Mahalanobis term |u|^2.
    const double* l = chol_[k].data();
    double maha = 0.0;
    std::array<double, 64> small{};
    std::vector<double> big;
    double* u = small.data();
    if (dims_ > small.size()) {
      big.resize(dims_);
      u = big.data();
    }
    for (std::size_t i = 0; i < dims_; ++i) {
      double s = z[static_cast<Eigen::Index>(i)] - means_[k * dims_ + i];
      for (std::size_t j = 0; j < i; ++j) s -= l[i * dims_ + j] * u[j];
      u[i] = s / l[i * dims_ + i];
      maha += u[i] * u[i];
    }
    jll[k] = std::log(priors_[k]) - 0.5 * log_det_[k] - 0.5 * maha;
  }
  return jll;
}

std::vector<double> QDA::decision_function(FeatureView x) const {
  check_dimensionality(x);
  return map_rows(x, [&](std::span<const float> r) {
    const auto jll = joint_log_likelihood(r);
    return jll[1] - jll[0];
  });
}

std::vector<std::array<double, 2>> QDA::predict_proba(FeatureView x) const {
  check_dimensionality(x);
  std::vector<std::array<double, 2>> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = softmax2(joint_log_likelihood(x.row(i)));
  return out;
}

nlohmann::json QDA::to_json() const {
  auto j = header(kind());
  j["dims"] = dims_;
  j["priors"] = priors_;
  j["means"] = means_;
  j["covariances"] = covariances_;
  j["offset"] = offset_;
  j["scale"] = scale_;
  j["reg_param"] = reg_param_;
  return j;
}

QDA QDA::from_json(const nlohmann::json& j) {
  check_header(j, ModelKind::QDA);
  return QDA(j.at("priors").get<std::array<double, 2>>(), j.at("means").get<std::vector<double>>(),
             j.at("covariances").get<std::vector<double>>(), j.at("offset").get<std::vector<double>>(),
             j.at("scale").get<std::vector<double>>(), j.at("reg_param").get<double>(), j.at("dims").get<std::size_t>());
}

QDA fit_qda(FeatureView x, std::span<const Label> y, double reg_param, const Priors& priors) {
  if (!(reg_param >= 0.0)) throw InvalidArgument("QDA regularization must be non-negative");
  const ClassSplit split = count_classes(x, y);
  require_both_classes(split);
  const std::size_t d = x.cols;
  if (x.rows <= d) throw FitError("QDA needs more rows than features");

  std::vector<double> offset(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) offset[j] += x(i, j);
  }
  for (auto& o : offset) o /= static_cast<double>(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) scale[j] += (x(i, j) - offset[j]) * (x(i, j) - offset[j]);
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(x.rows));
    if (!(s > 0.0)) s = 1.0;
  }

  std::vector<double> std_rows(x.rows * d);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) std_rows[i * d + j] = (x(i, j) - offset[j]) / scale[j];
  }
  std::vector<double> means(2 * d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::size_t k = y[i] == Label::Water ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) means[k * d + j] += std_rows[i * d + j];
  }
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t j = 0; j < d; ++j) means[k * d + j] /= static_cast<double>(split.counts[k]);
  }
  std::array<MatrixXd, 2> cov = {MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)),
                                 MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
  VectorXd diff(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::size_t k = y[i] == Label::Water ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) diff[static_cast<Eigen::Index>(j)] = std_rows[i * d + j] - means[k * d + j];
    cov[k].selfadjointView<Eigen::Lower>().rankUpdate(diff);
  }
  std::vector<double> covariances;
  covariances.reserve(2 * d * d);
  for (std::size_t k = 0; k < 2; ++k) {
    MatrixXd c = cov[k].selfadjointView<Eigen::Lower>();
    c /= static_cast<double>(split.counts[k]);
    MatrixXd reg = (1.0 - reg_param) * c;
    reg.diagonal().array() += reg_param;
    const auto flat = from_matrix(reg);
    covariances.insert(covariances.end(), flat.begin(), flat.end());
  }
  return QDA(resolve_priors(priors, split), std::move(means), std::move(covariances), std::move(offset),
             std::move(scale), reg_param, d);
}

std::unique_ptr<Model> fit_bayes(BayesKind kind, FeatureView x, std::span<const Label> y, const BayesHyper& hyper) {
  switch (kind) {
    case BayesKind::NaiveBayes: return std::make_unique<GaussianNB>(fit_naive_bayes(x, y, hyper.priors));
    case BayesKind::LDA: return std::make_unique<LDA>(fit_lda(x, y, hyper.shrinkage, hyper.priors));
    case BayesKind::QDA: return std::make_unique<QDA>(fit_qda(x, y, hyper.reg_param, hyper.priors));
  }
  throw InvalidArgument("unknown Bayes model kind");
}

// ---------------------------------------------------------------- LinearSGD

std::string_view sgd_loss_name(SgdLoss loss) {
  switch (loss) {
    case SgdLoss::Hinge: return "hinge";
    case SgdLoss::Logistic: return "log_loss";
    case SgdLoss::ModifiedHuber: return "modified_huber";
  }
  return "?";
}

SgdLoss parse_sgd_loss(std::string_view name) {
  if (name == "hinge") return SgdLoss::Hinge;
  if (name == "log_loss" || name == "log" || name == "logistic") return SgdLoss::Logistic;
  if (name == "modified_huber" || name == "huber") return SgdLoss::ModifiedHuber;
  throw InvalidArgument("unknown SGD loss '" + std::string(name) + "'");
}

double sgd_loss(SgdLoss loss, double margin, double y) {
  const double z = y * margin;
  switch (loss) {
    case SgdLoss::Hinge: return std::max(0.0, 1.0 - z);
    case SgdLoss::Logistic: return z > 18.0 ? std::exp(-z) : (z < -18.0 ? -z : std::log1p(std::exp(-z)));
    case SgdLoss::ModifiedHuber:
      if (z >= 1.0) return 0.0;
      if (z >= -1.0) return (1.0 - z) * (1.0 - z);
      return -4.0 * z;
  }
  return 0.0;
}

double sgd_dloss(SgdLoss loss, double margin, double y) {
  const double z = y * margin;
  switch (loss) {
    case SgdLoss::Hinge: return z < 1.0 ? -y : 0.0;
    case SgdLoss::Logistic: {
      if (z > 18.0) return -y * std::exp(-z);
      if (z < -18.0) return -y;
      return -y / (1.0 + std::exp(z));
    }
    case SgdLoss::ModifiedHuber:
      if (z >= 1.0) return 0.0;
      if (z >= -1.0) return -2.0 * (1.0 - z) * y;
      return -4.0 * y;
  }
  return 0.0;
}

LinearSGD::LinearSGD(std::vector<double> weights, double bias, SgdParams params, std::array<double, 2> class_weights,
                     int epochs, std::vector<double> epoch_losses)
    : weights_(std::move(weights)),
      bias_(bias),
      params_(params),
      class_weights_(class_weights),
      epochs_(epochs),
      epoch_losses_(std::move(epoch_losses)) {}

std::vector<double> LinearSGD::decision_function(FeatureView x) const {
  check_dimensionality(x);
  return map_rows(x, [&](std::span<const float> r) {
    double m = bias_;
    for (std::size_t j = 0; j < weights_.size(); ++j) m += weights_[j] * r[j];
    return m;
  });
}

std::vector<std::array<double, 2>> LinearSGD::predict_proba(FeatureView x) const {
  const auto m = decision_function(x);
  std::vector<std::array<double, 2>> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (params_.loss == SgdLoss::ModifiedHuber) {
      const double p = (std::clamp(m[i], -1.0, 1.0) + 1.0) / 2.0;
      out[i] = {1.0 - p, p};
    } else {
      out[i] = logistic_pair(m[i]);
    }
  }
  return out;
}

nlohmann::json LinearSGD::to_json() const {
  auto j = header(kind());
  j["weights"] = weights_;
  j["bias"] = bias_;
  j["loss"] = std::string(sgd_loss_name(params_.loss));
  j["alpha"] = params_.alpha;
  j["rebalance"] = params_.rebalance;
  j["seed"] = params_.seed;
  j["class_weights"] = class_weights_;
  j["epochs"] = epochs_;
  j["epoch_losses"] = epoch_losses_;
  const auto& s = params_.schedule;
  j["schedule"] = {{"initial_rate", s.initial_rate}, {"decay", s.decay},         {"patience", s.patience},
                   {"min_epochs", s.min_epochs},     {"max_epochs", s.max_epochs}, {"min_rate", s.min_rate},
                   {"tolerance", s.tolerance}};
  return j;
}

LinearSGD LinearSGD::from_json(const nlohmann::json& j) {
  check_header(j, ModelKind::LinearSGD);
  SgdParams p;
  p.loss = parse_sgd_loss(j.at("loss").get<std::string>());
  p.alpha = j.at("alpha").get<double>();
  p.rebalance = j.at("rebalance").get<bool>();
  p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    p.schedule.initial_rate = s.value("initial_rate", p.schedule.initial_rate);
    p.schedule.decay = s.value("decay", p.schedule.decay);
    p.schedule.patience = s.value("patience", p.schedule.patience);
    p.schedule.min_epochs = s.value("min_epochs", p.schedule.min_epochs);
    p.schedule.max_epochs = s.value("max_epochs", p.schedule.max_epochs);
    p.schedule.min_rate = s.value("min_rate", p.schedule.min_rate);
    p.schedule.tolerance = s.value("tolerance", p.schedule.tolerance);
  }
  return LinearSGD(j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(), p,
                   j.at("class_weights").get<std::array<double, 2>>(), j.value("epochs", 0),
                   j.value("epoch_losses", std::vector<double>{}));
}

LinearSGD fit_sgd(FeatureView x, std::span<const Label> y, const SgdParams& params) {
  const ClassSplit split = count_classes(x, y);
  if (x.rows == 0) throw FitError("SGD needs at least one row");
  if (!(params.alpha >= 0.0)) throw InvalidArgument("alpha must be non-negative");
  for (float v : x.values.first(x.rows * x.cols)) {
    if (!std::isfinite(v)) throw InvalidArgument("SGD features must be finite");
  }
  std::array<double, 2> cw = {1.0, 1.0};
  if (params.rebalance) {
    require_both_classes(split);
    const auto n = static_cast<double>(x.rows);
    cw = {n / (2.0 * static_cast<double>(split.counts[0])), n / (2.0 * static_cast<double>(split.counts[1]))};
  }
  const std::size_t d = x.cols;
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  std::vector<std::uint32_t> order(x.rows);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(params.seed);

  const auto& sched = params.schedule;
  double rate = sched.initial_rate;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  int epoch = 0;
  std::vector<double> losses;
  auto margin_of = [&](std::size_t i) {
    double m = b;
    for (std::size_t j = 0; j < d; ++j) m += w[j] * x(i, j);
    return m;
  };

  while (epoch < sched.max_epochs) {
    rng.shuffle(std::span<std::uint32_t>(order));
    const double shrink = std::max(0.0, 1.0 - rate * params.alpha);
    for (std::uint32_t i : order) {
      const double yi = y[i] == Label::Water ? 1.0 : -1.0;
      const double g = sgd_dloss(params.loss, margin_of(i), yi) * cw[yi > 0 ? 1 : 0];
      if (g != 0.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] -= rate * g * x(i, j);
        b -= rate * g;
      }
      for (double& wj : w) wj *= shrink;
    }
    ++epoch;

    double loss = 0.0, weight = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double yi = y[i] == Label::Water ? 1.0 : -1.0;
      const double c = cw[yi > 0 ? 1 : 0];
      loss += c * sgd_loss(params.loss, margin_of(i), yi);
      weight += c;
    }
    double norm2 = 0.0;
    for (double wj : w) norm2 += wj * wj;
    loss = loss / weight + 0.5 * params.alpha * norm2;
    if (!std::isfinite(loss) || !std::isfinite(b)) {
      throw FitError("SGD diverged at epoch " + std::to_string(epoch) + " (learning rate " + std::to_string(rate) + ")");
    }
    losses.push_back(loss);

    if (loss < best - sched.tolerance) {
      best = loss;
      stale = 0;
    } else if (++stale >= sched.patience) {
      rate *= sched.decay;
      stale = 0;
    }
    if (epoch >= sched.min_epochs && rate < sched.min_rate) break;
  }
  return LinearSGD(std::move(w), b, params, cw, epoch, std::move(losses));
}

}  // namespace floodpix::classifiers
