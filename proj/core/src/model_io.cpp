#include <string>

#include "floodpix/classifiers.hpp"
#include "floodpix/error.hpp"
#include "floodpix/gbdt.hpp"
#include "floodpix/model.hpp"

namespace floodpix {

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::NaiveBayes: return "nb";
    case ModelKind::LDA: return "lda";
    case ModelKind::QDA: return "qda";
    case ModelKind::LinearSGD: return "sgd";
    case ModelKind::GBDT: return "gbdt";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : {ModelKind::NaiveBayes, ModelKind::LDA, ModelKind::QDA, ModelKind::LinearSGD, ModelKind::GBDT}) {
    if (name == model_kind_name(k)) return k;
  }
  if (name == "naive_bayes") return ModelKind::NaiveBayes;
  throw InvalidArgument("unknown model kind '" + std::string(name) + "'");
}

std::vector<io::Label> Model::predict(FeatureView x) const {
  const auto margins = decision_function(x);
  std::vector<io::Label> out(margins.size());
  for (std::size_t i = 0; i < margins.size(); ++i) out[i] = margins[i] > 0.0 ? io::Label::Water : io::Label::Dry;
  return out;
}

void Model::check_dimensionality(const FeatureView& x) const {
  if (x.cols != dimensionality()) {
    throw InvalidArgument("feature width " + std::to_string(x.cols) + " does not match model dimensionality " +
                          std::to_string(dimensionality()));
  }
  if (x.values.size() < x.rows * x.cols) throw InvalidArgument("feature view is shorter than rows x cols");
}

std::unique_ptr<Model> model_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("kind")) throw InvalidArgument("model document lacks a kind");
  switch (parse_model_kind(doc.at("kind").get<std::string>())) {
    case ModelKind::NaiveBayes: return std::make_unique<classifiers::GaussianNB>(classifiers::GaussianNB::from_json(doc));
    case ModelKind::LDA: return std::make_unique<classifiers::LDA>(classifiers::LDA::from_json(doc));
    case ModelKind::QDA: return std::make_unique<classifiers::QDA>(classifiers::QDA::from_json(doc));
    case ModelKind::LinearSGD: return std::make_unique<classifiers::LinearSGD>(classifiers::LinearSGD::from_json(doc));
    case ModelKind::GBDT: return std::make_unique<gbdt::GBDTModel>(gbdt::GBDTModel::from_json(doc));
  }
  throw InvalidArgument("unknown model kind");
}

}  // namespace floodpix
