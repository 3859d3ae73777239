#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace irseg {

enum class CovarianceMode { kFull, kDiagonal };

struct ClassGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unregularized; the model adds gamma_cov * I
  double prior = 0.5;
};

/// Per-class multivariate normals with priors. Shared by GDA, NBC, GMM and the MRF.
class GaussianClassModel {
 public:
  GaussianClassModel() = default;
  GaussianClassModel(std::vector<ClassGaussian> classes, double gamma_cov,
                     CovarianceMode mode = CovarianceMode::kFull);

  std::size_t num_classes() const { return classes_.size(); }
  Eigen::Index dim() const { return classes_.empty() ? 0 : classes_.front().mean.size(); }
  const ClassGaussian& component(std::size_t k) const { return classes_[k]; }
  const std::vector<ClassGaussian>& classes() const { return classes_; }
  double gamma_cov() const { return gamma_cov_; }
  CovarianceMode mode() const { return mode_; }

  /// log|Sigma_k + gamma I| (diagonal of Sigma only in kDiagonal mode).
  double log_det(std::size_t k) const { return log_det_[k]; }
  /// (x - mu_k)^T (Sigma_k + gamma I)^-1 (x - mu_k) for every row of X.
  Eigen::VectorXd mahalanobis(const Eigen::Ref<const Eigen::MatrixXd>& X, std::size_t k) const;
  /// Full normal log-density log N(x | mu_k, Sigma_k + gamma I) per row.
  Eigen::VectorXd log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X, std::size_t k) const;
  /// Rows: samples, columns: log pi_k + log N(x | k).
  Eigen::MatrixXd log_joint(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  /// Row-stochastic class posteriors computed with log-sum-exp.
  Eigen::MatrixXd posterior(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  /// Same model with classes `a` and `b` exchanged.
  GaussianClassModel swapped(std::size_t a, std::size_t b) const;

 private:
  void factorize();
  void check_dims(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  std::vector<ClassGaussian> classes_;
  double gamma_cov_ = 0;
  CovarianceMode mode_ = CovarianceMode::kFull;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
  std::vector<Eigen::VectorXd> inv_var_;
  std::vector<double> log_det_;
};

/// Row-wise log-sum-exp.
Eigen::VectorXd log_sum_exp_rows(const Eigen::Ref<const Eigen::MatrixXd>& A);
/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& A);

/// Per-class sample mean and unbiased (n - 1) covariance; uniform priors.
/// Labels must be 0/1 and each class needs at least two samples.
GaussianClassModel fit_gda(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const std::uint8_t> y,
                           double gamma_cov, CovarianceMode mode = CovarianceMode::kFull);

/// Naive Bayes: per-feature univariate normals, variances floored at 1e-9 x the
/// feature's overall variance.
GaussianClassModel fit_nbc(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const std::uint8_t> y);

// ---------------------------------------------------------------------------
// Gaussian mixture via EM

struct GmmOptions {
  int components = 2;
  double gamma_cov = 0;
  std::uint64_t seed = 0;
  int max_iter = 200;
  double tol = 1e-6;
};

struct GmmFit {
  GaussianClassModel model;
  std::vector<double> log_likelihood;  // observed-data log-likelihood of each EM iterate
  int iterations = 0;
  int reseeds = 0;
};

/// Observed-data log-likelihood sum_i log sum_k pi_k N(x_i | k).
double mixture_log_likelihood(const GaussianClassModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// One E step followed by one M step (biased weighted covariance, mixture priors).
/// Components whose responsibility mass falls below `collapse_mass` are reseeded at a
/// random sample; `reseeded` is incremented for each.
GaussianClassModel em_step(const GaussianClassModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                           std::uint64_t reseed_state = 0, int* reseeded = nullptr);

GmmFit fit_gmm(const Eigen::Ref<const Eigen::MatrixXd>& X, const GmmOptions& opts,
               const std::optional<GaussianClassModel>& init = std::nullopt);

// ---------------------------------------------------------------------------
// k-means

struct KMeansModel {
  Eigen::MatrixXd centers;    // K x d, standardized space
  Eigen::VectorXd feat_mean;  // standardization offset
  Eigen::VectorXd feat_scale; // standardization divisor (std. deviation, 1 for constant features)

  Eigen::MatrixXd standardize(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  /// Squared distances to each center, N x K, in standardized space.
  Eigen::MatrixXd squared_distances(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  /// Hard assignment; ties go to the lower cluster index.
  std::vector<int> assign(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  /// K = 2: p_k = 1 - d_k^2 / sum_j d_j^2 (0.5 each when all distances vanish).
  /// K > 2: softmax(-d^2).
  Eigen::MatrixXd posterior(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

struct KMeansFit {
  KMeansModel model;
  std::vector<double> sse;  // within-cluster SSE after each assignment step
  int iterations = 0;
};

KMeansFit fit_kmeans(const Eigen::Ref<const Eigen::MatrixXd>& X, int K, std::uint64_t seed, int max_iter = 300);

/// k-means++ seeding; returns row indices of the chosen seeds.
std::vector<Eigen::Index> kmeanspp_seeds(const Eigen::Ref<const Eigen::MatrixXd>& X, int K, std::uint64_t seed);

}  // namespace irseg
