#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irseg/discriminative.hpp"
#include "irseg/features.hpp"
#include "irseg/generative.hpp"
#include "irseg/grid.hpp"
#include "irseg/mrf.hpp"

namespace irseg {

enum class ModelKind { kGDA, kNBC, kGMM, kKMeans, kMRF, kSaMRF, kIcmMRF, kSaIcmMRF, kRR, kSVC, kGP };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);
std::vector<ModelKind> all_model_kinds();

/// Fitted from labels (the rest learn without labels and use them only to name clusters).
bool is_supervised(ModelKind k);
bool is_mrf(ModelKind k);
bool is_linear(ModelKind k);
/// Polynomial expansion applies to the linear models only.
bool uses_expansion(ModelKind k);

/// Every hyperparameter any model uses; each kind reads the fields it needs.
struct Hyper {
  double gamma = 1.0;  // covariance regularizer (generative, MRF), ridge gamma (RR), prior scale (GP)
  double C = 1.0;      // SVC
  double beta = 1.0;   // MRF coupling
  CliqueOrder clique = CliqueOrder::kFirst;
  double alpha = 0.75; // SA cooling factor
  std::uint64_t seed = 0;
  int max_sweeps = 100;
  int max_iter = 50;   // EM, k-means, ICM
  bool likelihood_first_pass = false;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

/// Column-wise z-score; constant columns keep scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::Ref<const Eigen::MatrixXd>& X);
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

/// A fitted segmentation model of any kind, with its feature spec and virtual prior.
class Segmenter {
 public:
  Segmenter() = default;

  /// Fits on labeled images (features from `spec`). Unsupervised kinds ignore the
  /// labels except to decide which cluster is cloud.
  static Segmenter fit(ModelKind kind, const FeatureSpec& spec, const Hyper& hyper,
                       const std::vector<const FeatureMatrix*>& images, const std::vector<const LabelMask*>& labels);

  /// Per-pixel cloud posterior.
  ProbabilityMap posterior(const FeatureMatrix& features) const;
  /// Hard labels with the stored lambda.
  LabelMask segment(const FeatureMatrix& features) const;

  ModelKind kind() const { return kind_; }
  const FeatureSpec& spec() const { return spec_; }
  const Hyper& hyper() const { return hyper_; }
  double lambda() const { return lambda_; }
  void set_lambda(double l);

  const std::optional<GaussianClassModel>& gaussian() const { return gauss_; }
  const std::optional<KMeansModel>& kmeans() const { return kmeans_; }
  const std::optional<MrfModel>& mrf() const { return mrf_; }
  const std::optional<LinearModel>& linear() const { return linear_; }
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }
  /// Component index that represents cloud (GMM, k-means).
  int cloud_component() const { return cloud_component_; }

  /// Design matrix the linear model sees (standardized, expanded).
  Eigen::MatrixXd design(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  std::string to_json() const;
  static Segmenter from_json(const std::string& text);

  friend bool operator==(const Segmenter& a, const Segmenter& b) { return a.to_json() == b.to_json(); }

 private:
  ModelKind kind_ = ModelKind::kGDA;
  FeatureSpec spec_;
  Hyper hyper_;
  double lambda_ = 1.0;
  std::optional<GaussianClassModel> gauss_;
  std::optional<KMeansModel> kmeans_;
  std::optional<MrfModel> mrf_;
  std::optional<LinearModel> linear_;
  std::optional<Standardizer> standardizer_;
  int cloud_component_ = 1;
};

}  // namespace irseg
