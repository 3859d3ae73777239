#include "irseg/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "irseg/error.hpp"
#include "irseg/eval.hpp"
#include "irseg/poly.hpp"

namespace irseg {
namespace {

using json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

Eigen::VectorXd json_vec(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

Eigen::MatrixXd json_mat(const json& a) {
  if (a.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(a.size());
  const auto cols = static_cast<Eigen::Index>(a[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(a[static_cast<std::size_t>(r)].size()) != cols) {
      throw data_error("model.matrix", "ragged matrix in model file");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json gaussian_json(const GaussianClassModel& g) {
  json j;
  j["mode"] = g.mode() == CovarianceMode::kFull ? "full" : "diagonal";
  j["gamma_cov"] = g.gamma_cov();
  j["classes"] = json::array();
  for (const auto& c : g.classes()) {
    json k;
    k["mean"] = vec_json(c.mean);
    k["cov"] = mat_json(c.cov);
    k["prior"] = c.prior;
    j["classes"].push_back(k);
  }
  return j;
}

GaussianClassModel json_gaussian(const json& j) {
  std::vector<ClassGaussian> classes;
  for (const auto& k : j.at("classes")) {
    classes.push_back({json_vec(k.at("mean")), json_mat(k.at("cov")), k.at("prior").get<double>()});
  }
  const auto mode = j.at("mode").get<std::string>() == "full" ? CovarianceMode::kFull : CovarianceMode::kDiagonal;
  return GaussianClassModel(std::move(classes), j.at("gamma_cov").get<double>(), mode);
}

std::vector<std::uint8_t> stacked_labels(const std::vector<const FeatureMatrix*>& images,
                                         const std::vector<const LabelMask*>& labels) {
  if (images.size() != labels.size() || images.empty()) {
    throw data_error("fit.images", "need matching, non-empty image and label lists");
  }
  std::vector<std::uint8_t> y;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<std::size_t>(images[i]->rows()) != labels[i]->size()) {
      throw data_error("fit.shape", "label mask does not match feature rows");
    }
    for (auto v : labels[i]->values()) y.push_back(v ? 1 : 0);
  }
  return y;
}

// J of "cloud iff p > 0.5", or -inf when undefined.
double hard_j(const Eigen::VectorXd& p_cloud, const std::vector<std::uint8_t>& y) {
  std::vector<std::uint8_t> pred(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) pred[i] = p_cloud(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0;
  return j_statistic(confusion(y, pred));
}

void require_both_classes(const std::vector<std::uint8_t>& y) {
  const auto ones = std::count(y.begin(), y.end(), std::uint8_t{1});
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(y.size())) {
    throw data_error("fit.single_class", "training labels contain a single class");
  }
}

}  // namespace

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kGDA: return "GDA";
    case ModelKind::kNBC: return "NBC";
    case ModelKind::kGMM: return "GMM";
    case ModelKind::kKMeans: return "k-means";
    case ModelKind::kMRF: return "MRF";
    case ModelKind::kSaMRF: return "SA-MRF";
    case ModelKind::kIcmMRF: return "ICM-MRF";
    case ModelKind::kSaIcmMRF: return "SA-ICM-MRF";
    case ModelKind::kRR: return "RR";
    case ModelKind::kSVC: return "SVC";
    case ModelKind::kGP: return "GP";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto k : all_model_kinds()) {
    std::string name = to_string(k);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (l == name) return k;
  }
  if (l == "kmeans") return ModelKind::kKMeans;
  throw usage_error("model.kind", "unknown model '" + s + "'");
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::kGDA,   ModelKind::kNBC,      ModelKind::kGMM, ModelKind::kKMeans,
          ModelKind::kMRF,   ModelKind::kSaMRF,    ModelKind::kIcmMRF, ModelKind::kSaIcmMRF,
          ModelKind::kRR,    ModelKind::kSVC,      ModelKind::kGP};
}

bool is_supervised(ModelKind k) {
  return k == ModelKind::kGDA || k == ModelKind::kNBC || k == ModelKind::kMRF || k == ModelKind::kSaMRF || is_linear(k);
}
bool is_mrf(ModelKind k) {
  return k == ModelKind::kMRF || k == ModelKind::kSaMRF || k == ModelKind::kIcmMRF || k == ModelKind::kSaIcmMRF;
}
bool is_linear(ModelKind k) { return k == ModelKind::kRR || k == ModelKind::kSVC || k == ModelKind::kGP; }
bool uses_expansion(ModelKind k) { return is_linear(k); }

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.rows() == 0) throw data_error("fit.empty", "no training rows");
  Standardizer s;
  s.mean = X.colwise().mean();
  s.scale.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - s.mean(c)).square().mean();
    s.scale(c) = var > 0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.cols() != mean.size()) throw data_error("predict.dim_mismatch", "feature count differs from the model");
  return (X.rowwise() - mean).array().rowwise() / scale.array();
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd Segmenter::design(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (!standardizer_) throw usage_error("model.design", "model has no linear design");
  const Eigen::MatrixXd Z = standardizer_->apply(X);
  const PolynomialExpansion poly(static_cast<std::size_t>(Z.cols()), spec_.expansion_order, spec_.expansion_bias);
  return poly.expand_rows(Z);
}

void Segmenter::set_lambda(double l) {
  if (!(l > 0) || !std::isfinite(l)) throw usage_error("model.lambda", "lambda must be finite and > 0");
  lambda_ = l;
}

Segmenter Segmenter::fit(ModelKind kind, const FeatureSpec& spec, const Hyper& hyper,
                         const std::vector<const FeatureMatrix*>& images, const std::vector<const LabelMask*>& labels) {
  Segmenter s;
  s.kind_ = kind;
  s.spec_ = spec;
  s.hyper_ = hyper;
  const auto y = stacked_labels(images, labels);
  require_both_classes(y);
  const Eigen::MatrixXd X = stack_rows(images);
  for (const auto* im : images) {
    if (static_cast<std::size_t>(im->cols()) != spec.raw_dim()) {
      throw data_error("fit.dim", "feature matrix does not match the feature spec");
    }
  }

  switch (kind) {
    case ModelKind::kGDA:
      s.gauss_ = fit_gda(X, y, hyper.gamma, CovarianceMode::kFull);
      break;
    case ModelKind::kNBC:
      s.gauss_ = fit_nbc(X, y);
      break;
    case ModelKind::kGMM: {
      GmmOptions o;
      o.gamma_cov = hyper.gamma;
      o.seed = hyper.seed;
      o.max_iter = std::max(hyper.max_iter, 1) * 4;
      s.gauss_ = fit_gmm(X, o).model;
      const Eigen::MatrixXd post = s.gauss_->posterior(X);
      s.cloud_component_ = hard_j(post.col(0), y) > hard_j(post.col(1), y) ? 0 : 1;
      break;
    }
    case ModelKind::kKMeans: {
      s.kmeans_ = fit_kmeans(X, 2, hyper.seed, std::max(hyper.max_iter, 1) * 6).model;
      const Eigen::MatrixXd post = s.kmeans_->posterior(X);
      s.cloud_component_ = hard_j(post.col(0), y) > hard_j(post.col(1), y) ? 0 : 1;
      break;
    }
    case ModelKind::kMRF:
    case ModelKind::kSaMRF:
      s.mrf_ = fit_mrf_supervised(images, labels, hyper.gamma, hyper.beta, hyper.clique);
      break;
    case ModelKind::kIcmMRF:
    case ModelKind::kSaIcmMRF: {
      IcmOptions o;
      o.gamma_cov = hyper.gamma;
      o.beta = hyper.beta;
      o.order = hyper.clique;
      o.seed = hyper.seed;
      o.max_iter = hyper.max_iter;
      o.likelihood_first_pass = hyper.likelihood_first_pass;
      auto fit = icm_fit(images, o);
      // Name the clusters with the training labels.
      Eigen::VectorXd p_cloud(static_cast<Eigen::Index>(y.size()));
      Eigen::Index row = 0;
      for (const auto& st : fit.states) {
        for (auto l : st.labels) p_cloud(row++) = l > 0 ? 1.0 : 0.0;
      }
      const Eigen::VectorXd p_clear = (1.0 - p_cloud.array()).matrix();
      if (hard_j(p_clear, y) > hard_j(p_cloud, y)) fit.model.classes = fit.model.classes.swapped(0, 1);
      s.mrf_ = std::move(fit.model);
      break;
    }
    case ModelKind::kRR:
    case ModelKind::kSVC:
    case ModelKind::kGP: {
      s.standardizer_ = Standardizer::fit(X);
      const Eigen::MatrixXd phi = s.design(X);
      Eigen::VectorXd t(static_cast<Eigen::Index>(y.size()));
      for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i)) = y[i];
      if (kind == ModelKind::kRR) {
        s.linear_ = rr_fit(phi, t, hyper.gamma);
      } else if (kind == ModelKind::kSVC) {
        s.linear_ = svc_fit(phi, (2.0 * t.array() - 1.0).matrix(), hyper.C);
      } else {
        s.linear_ = gp_fit(phi, t, hyper.gamma);
      }
      break;
    }
  }
  return s;
}

ProbabilityMap Segmenter::posterior(const FeatureMatrix& features) const {
  if (static_cast<std::size_t>(features.cols()) != spec_.raw_dim()) {
    throw data_error("predict.dim_mismatch", "feature matrix does not match the model's feature spec");
  }
  ProbabilityMap out(features.width, features.height);
  if (out.size() != static_cast<std::size_t>(features.rows())) {
    throw data_error("predict.shape", "feature matrix rows do not match its image shape");
  }
  Eigen::VectorXd p;
  switch (kind_) {
    case ModelKind::kGDA:
    case ModelKind::kNBC:
      p = gauss_->posterior(features.values).col(1);
      break;
    case ModelKind::kGMM:
      p = gauss_->posterior(features.values).col(cloud_component_);
      break;
    case ModelKind::kKMeans:
      p = kmeans_->posterior(features.values).col(cloud_component_);
      break;
    case ModelKind::kMRF:
    case ModelKind::kIcmMRF: {
      const auto state = map_iterate(*mrf_, features, hyper_.max_sweeps);
      return mrf_posterior(state, mrf_->beta, mrf_->order);
    }
    case ModelKind::kSaMRF:
    case ModelKind::kSaIcmMRF: {
      SaSchedule sched;
      sched.alpha = hyper_.alpha;
      sched.seed = hyper_.seed;
      const auto res = sa_optimize(*mrf_, features, sched);
      return mrf_posterior(res.state, mrf_->beta, mrf_->order);
    }
    case ModelKind::kRR:
    case ModelKind::kSVC:
    case ModelKind::kGP:
      p = predict_proba(*linear_, design(features.values));
      break;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(p(static_cast<Eigen::Index>(i)), 0.0, 1.0);
  return out;
}

LabelMask Segmenter::segment(const FeatureMatrix& features) const { return apply_lambda(posterior(features), lambda_); }

// ---------------------------------------------------------------------------

std::string Segmenter::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = to_string(kind_);
  j["spec"] = {{"variant", to_string(spec_.variant)},
               {"neighborhood", to_string(spec_.neighborhood)},
               {"expansion_order", spec_.expansion_order},
               {"expansion_bias", spec_.expansion_bias}};
  j["hyper"] = {{"gamma", hyper_.gamma},
                {"C", hyper_.C},
                {"beta", hyper_.beta},
                {"clique", to_string(hyper_.clique)},
                {"alpha", hyper_.alpha},
                {"seed", hyper_.seed},
                {"max_sweeps", hyper_.max_sweeps},
                {"max_iter", hyper_.max_iter},
                {"likelihood_first_pass", hyper_.likelihood_first_pass}};
  j["lambda"] = lambda_;
  j["cloud_component"] = cloud_component_;
  if (gauss_) j["gaussian"] = gaussian_json(*gauss_);
  if (kmeans_) {
    j["kmeans"] = {{"centers", mat_json(kmeans_->centers)},
                   {"feat_mean", vec_json(kmeans_->feat_mean)},
                   {"feat_scale", vec_json(kmeans_->feat_scale)}};
  }
  if (mrf_) {
    j["mrf"] = {{"beta", mrf_->beta}, {"order", to_string(mrf_->order)}, {"classes", gaussian_json(mrf_->classes)}};
  }
  if (linear_) {
    json l;
    l["kind"] = to_string(linear_->kind);
    l["hyper"] = linear_->hyper;
    l["w"] = vec_json(linear_->w);
    if (linear_->sigma_n) l["sigma_n"] = mat_json(*linear_->sigma_n);
    j["linear"] = l;
  }
  if (standardizer_) {
    j["standardizer"] = {{"mean", vec_json(standardizer_->mean.transpose())},
                         {"scale", vec_json(standardizer_->scale.transpose())}};
  }
  return j.dump(1);
}

Segmenter Segmenter::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error("model.parse", std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw data_error("model.schema", "unsupported model schema version");
    }
    Segmenter s;
    s.kind_ = parse_model_kind(j.at("kind").get<std::string>());
    const auto& sp = j.at("spec");
    s.spec_.variant = parse_variant(sp.at("variant").get<std::string>());
    s.spec_.neighborhood = parse_neighborhood(sp.at("neighborhood").get<std::string>());
    s.spec_.expansion_order = sp.at("expansion_order").get<int>();
    s.spec_.expansion_bias = sp.at("expansion_bias").get<double>();
    const auto& h = j.at("hyper");
    s.hyper_.gamma = h.at("gamma").get<double>();
    s.hyper_.C = h.at("C").get<double>();
    s.hyper_.beta = h.at("beta").get<double>();
    s.hyper_.clique = parse_clique_order(h.at("clique").get<std::string>());
    s.hyper_.alpha = h.at("alpha").get<double>();
    s.hyper_.seed = h.at("seed").get<std::uint64_t>();
    s.hyper_.max_sweeps = h.at("max_sweeps").get<int>();
    s.hyper_.max_iter = h.at("max_iter").get<int>();
    s.hyper_.likelihood_first_pass = h.at("likelihood_first_pass").get<bool>();
    s.set_lambda(j.at("lambda").get<double>());
    s.cloud_component_ = j.at("cloud_component").get<int>();
    if (j.contains("gaussian")) s.gauss_ = json_gaussian(j["gaussian"]);
    if (j.contains("kmeans")) {
      const auto& k = j["kmeans"];
      s.kmeans_ = KMeansModel{json_mat(k.at("centers")), json_vec(k.at("feat_mean")), json_vec(k.at("feat_scale"))};
    }
    if (j.contains("mrf")) {
      const auto& m = j["mrf"];
      s.mrf_ = MrfModel{json_gaussian(m.at("classes")), m.at("beta").get<double>(),
                        parse_clique_order(m.at("order").get<std::string>())};
    }
    if (j.contains("linear")) {
      const auto& l = j["linear"];
      LinearModel lm;
      const auto k = l.at("kind").get<std::string>();
      lm.kind = k == "RR" ? LinearKind::kRR : k == "SVC" ? LinearKind::kSVC : LinearKind::kGP;
      lm.hyper = l.at("hyper").get<double>();
      lm.w = json_vec(l.at("w"));
      if (l.contains("sigma_n")) lm.sigma_n = json_mat(l["sigma_n"]);
      s.linear_ = std::move(lm);
    }
    if (j.contains("standardizer")) {
      const auto& st = j["standardizer"];
      s.standardizer_ = Standardizer{json_vec(st.at("mean")).transpose(), json_vec(st.at("scale")).transpose()};
    }
    const bool ok = (s.kind_ == ModelKind::kGDA || s.kind_ == ModelKind::kNBC || s.kind_ == ModelKind::kGMM)
                        ? s.gauss_.has_value()
                    : s.kind_ == ModelKind::kKMeans ? s.kmeans_.has_value()
                    : is_mrf(s.kind_)               ? s.mrf_.has_value()
                                                    : (s.linear_.has_value() && s.standardizer_.has_value());
    if (!ok) throw data_error("model.incomplete", "model file lacks the parameters of its kind");
    return s;
  } catch (const json::exception& e) {
    throw data_error("model.field", std::string("model file is missing or has a malformed field: ") + e.what());
  }
}

}  // namespace irseg
