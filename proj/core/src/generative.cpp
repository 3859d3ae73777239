#include "irseg/generative.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "irseg/error.hpp"

namespace irseg {
namespace {

void check_labels(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const std::uint8_t> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw data_error("fit.shape", "feature rows and labels differ in length");
  }
  if (X.cols() < 1) throw data_error("fit.dim", "need at least one feature");
  if (!X.allFinite()) throw data_error("fit.non_finite", "features contain non-finite values");
  for (auto v : y) {
    if (v > 1) throw data_error("fit.labels", "labels must be 0 or 1");
  }
}

std::vector<Eigen::Index> rows_of_class(std::span<const std::uint8_t> y, std::uint8_t k) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == k) idx.push_back(static_cast<Eigen::Index>(i));
  return idx;
}

// Unbiased sample mean/covariance over the selected rows.
ClassGaussian class_stats(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<Eigen::Index>& idx) {
  if (idx.size() < 2) throw data_error("fit.class_size", "each class needs at least 2 samples");
  const Eigen::MatrixXd S = X(idx, Eigen::all);
  ClassGaussian g;
  g.mean = S.colwise().mean().transpose();
  const Eigen::MatrixXd D = S.rowwise() - g.mean.transpose();
  g.cov = (D.transpose() * D) / static_cast<double>(idx.size() - 1);
  g.prior = 0.5;
  return g;
}

Eigen::MatrixXd biased_cov(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd D = X.rowwise() - mu;
  return (D.transpose() * D) / static_cast<double>(X.rows());
}

}  // namespace

GaussianClassModel::GaussianClassModel(std::vector<ClassGaussian> classes, double gamma_cov, CovarianceMode mode)
    : classes_(std::move(classes)), gamma_cov_(gamma_cov), mode_(mode) {
  if (classes_.empty()) throw usage_error("gaussian.empty", "class model needs at least one class");
  if (gamma_cov_ < 0) throw usage_error("gaussian.gamma", "gamma_cov must be >= 0");
  const auto d = classes_.front().mean.size();
  for (const auto& c : classes_) {
    if (c.mean.size() != d || c.cov.rows() != d || c.cov.cols() != d) {
      throw data_error("gaussian.shape", "class mean/covariance dimensions disagree");
    }
  }
  factorize();
}

void GaussianClassModel::factorize() {
  chol_.clear();
  inv_var_.clear();
  log_det_.clear();
  for (const auto& c : classes_) {
    if (mode_ == CovarianceMode::kFull) {
      Eigen::MatrixXd S = 0.5 * (c.cov + c.cov.transpose());
      S.diagonal().array() += gamma_cov_;
      Eigen::LLT<Eigen::MatrixXd> llt(S);
      if (llt.info() != Eigen::Success) {
        throw numerical_error("gaussian.singular", "class covariance is not positive definite; raise gamma_cov");
      }
      log_det_.push_back(2.0 * llt.matrixLLT().diagonal().array().log().sum());
      chol_.push_back(std::move(llt));
    } else {
      Eigen::VectorXd var = c.cov.diagonal().array() + gamma_cov_;
      if ((var.array() <= 0).any() || !var.allFinite()) {
        throw numerical_error("gaussian.singular", "class variance is not positive");
      }
      log_det_.push_back(var.array().log().sum());
      inv_var_.push_back(var.cwiseInverse());
    }
  }
}

void GaussianClassModel::check_dims(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.cols() != dim()) throw data_error("gaussian.dim_mismatch", "feature dimension does not match model");
}

Eigen::VectorXd GaussianClassModel::mahalanobis(const Eigen::Ref<const Eigen::MatrixXd>& X, std::size_t k) const {
  check_dims(X);
  const Eigen::MatrixXd D = X.rowwise() - classes_[k].mean.transpose();
  if (mode_ == CovarianceMode::kFull) {
    const Eigen::MatrixXd Z = chol_[k].matrixL().solve(D.transpose());
    return Z.colwise().squaredNorm().transpose();
  }
  return (D.array().square().rowwise() * inv_var_[k].transpose().array()).rowwise().sum().matrix();
}

Eigen::VectorXd GaussianClassModel::log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X, std::size_t k) const {
  const double c = static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) + log_det_[k];
  return (-0.5 * (mahalanobis(X, k).array() + c)).matrix();
}

Eigen::MatrixXd GaussianClassModel::log_joint(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(classes_.size()));
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    const double lp = classes_[k].prior > 0 ? std::log(classes_[k].prior) : -std::numeric_limits<double>::infinity();
    out.col(static_cast<Eigen::Index>(k)) = log_likelihood(X, k).array() + lp;
  }
  return out;
}

Eigen::MatrixXd GaussianClassModel::posterior(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  return softmax_rows(log_joint(X));
}

GaussianClassModel GaussianClassModel::swapped(std::size_t a, std::size_t b) const {
  auto classes = classes_;
  std::swap(classes[a], classes[b]);
  return GaussianClassModel(std::move(classes), gamma_cov_, mode_);
}

Eigen::VectorXd log_sum_exp_rows(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  const Eigen::VectorXd m = A.rowwise().maxCoeff();
  Eigen::VectorXd out(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    if (!std::isfinite(m(i))) {
      out(i) = m(i);
      continue;
    }
    out(i) = m(i) + std::log((A.row(i).array() - m(i)).exp().sum());
  }
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  const Eigen::VectorXd lse = log_sum_exp_rows(A);
  return (A.colwise() - lse).array().exp().matrix();
}

GaussianClassModel fit_gda(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const std::uint8_t> y,
                           double gamma_cov, CovarianceMode mode) {
  check_labels(X, y);
  std::vector<ClassGaussian> classes;
  for (std::uint8_t k = 0; k < 2; ++k) classes.push_back(class_stats(X, rows_of_class(y, k)));
  return GaussianClassModel(std::move(classes), gamma_cov, mode);
}

GaussianClassModel fit_nbc(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const std::uint8_t> y) {
  check_labels(X, y);
  const Eigen::VectorXd overall = biased_cov(X).diagonal();
  std::vector<ClassGaussian> classes;
  for (std::uint8_t k = 0; k < 2; ++k) {
    auto g = class_stats(X, rows_of_class(y, k));
    Eigen::VectorXd var = g.cov.diagonal();
    for (Eigen::Index j = 0; j < var.size(); ++j) {
      const double floor = overall(j) > 0 ? 1e-9 * overall(j) : 1e-9;
      var(j) = std::max(var(j), floor);
    }
    g.cov = var.asDiagonal();
    classes.push_back(std::move(g));
  }
  return GaussianClassModel(std::move(classes), 0.0, CovarianceMode::kDiagonal);
}

// ---------------------------------------------------------------------------

double mixture_log_likelihood(const GaussianClassModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  return log_sum_exp_rows(model.log_joint(X)).sum();
}

GaussianClassModel em_step(const GaussianClassModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                           std::uint64_t reseed_state, int* reseeded) {
  const Eigen::MatrixXd resp = model.posterior(X);
  const auto n = static_cast<double>(X.rows());
  const double collapse_mass = 1e-8 * n;
  std::mt19937_64 rng(reseed_state);
  std::vector<ClassGaussian> next;
  for (Eigen::Index k = 0; k < resp.cols(); ++k) {
    const double nk = resp.col(k).sum();
    ClassGaussian g;
    if (nk < collapse_mass) {
      std::uniform_int_distribution<Eigen::Index> pick(0, X.rows() - 1);
      const auto row = pick(rng);
      g.mean = X.row(row).transpose();
      g.cov = biased_cov(X);
      g.prior = 1.0 / static_cast<double>(resp.cols());
      if (reseeded) ++*reseeded;
      spdlog::warn("gmm: component {} collapsed (mass {:.3g}); reseeded at sample {}", k, nk, row);
    } else {
      g.mean = (X.transpose() * resp.col(k)) / nk;
      const Eigen::MatrixXd D = X.rowwise() - g.mean.transpose();
      g.cov = (D.transpose() * resp.col(k).asDiagonal() * D) / nk;
      g.cov = 0.5 * (g.cov + g.cov.transpose());
      g.prior = nk / n;
    }
    next.push_back(std::move(g));
  }
  double total = 0;
  for (const auto& g : next) total += g.prior;
  for (auto& g : next) g.prior /= total;
  return GaussianClassModel(std::move(next), model.gamma_cov(), model.mode());
}

GmmFit fit_gmm(const Eigen::Ref<const Eigen::MatrixXd>& X, const GmmOptions& opts,
               const std::optional<GaussianClassModel>& init) {
  if (opts.components < 1) throw usage_error("gmm.k", "GMM needs at least one component");
  if (X.rows() < opts.components) throw data_error("gmm.n", "GMM needs at least K samples");
  if (!X.allFinite()) throw data_error("fit.non_finite", "features contain non-finite values");

  GmmFit fit;
  if (init) {
    fit.model = *init;
  } else {
    const auto seeds = kmeanspp_seeds(X, opts.components, opts.seed);
    const Eigen::MatrixXd cov = biased_cov(X);
    std::vector<ClassGaussian> classes;
    for (auto s : seeds) {
      classes.push_back({X.row(s).transpose(), cov, 1.0 / static_cast<double>(opts.components)});
    }
    fit.model = GaussianClassModel(std::move(classes), opts.gamma_cov, CovarianceMode::kFull);
  }
  double ll = mixture_log_likelihood(fit.model, X);
  fit.log_likelihood.push_back(ll);
  for (int it = 0; it < opts.max_iter; ++it) {
    auto next = em_step(fit.model, X, opts.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(it + 1)),
                        &fit.reseeds);
    const double next_ll = mixture_log_likelihood(next, X);
    fit.model = std::move(next);
    fit.log_likelihood.push_back(next_ll);
    fit.iterations = it + 1;
    if (next_ll - ll < opts.tol) break;
    ll = next_ll;
  }
  return fit;
}

// ---------------------------------------------------------------------------

std::vector<Eigen::Index> kmeanspp_seeds(const Eigen::Ref<const Eigen::MatrixXd>& X, int K, std::uint64_t seed) {
  if (K < 1 || X.rows() < K) throw data_error("kmeans.n", "need at least K samples");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> first(0, X.rows() - 1);
  std::vector<Eigen::Index> seeds{first(rng)};
  Eigen::VectorXd d2 = (X.rowwise() - X.row(seeds[0])).rowwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < K) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      double acc = 0;
      for (Eigen::Index i = 0; i < d2.size(); ++i) {
        acc += d2(i);
        if (d2(i) > 0 && acc >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Eigen::Index i = d2.size() - 1; i >= 0; --i)
          if (d2(i) > 0) {
            pick = i;
            break;
          }
      }
    } else {
      // All remaining points coincide with a seed; take the first unused row.
      for (Eigen::Index i = 0; i < X.rows() && pick < 0; ++i)
        if (std::find(seeds.begin(), seeds.end(), i) == seeds.end()) pick = i;
    }
    seeds.push_back(pick);
    d2 = d2.cwiseMin((X.rowwise() - X.row(pick)).rowwise().squaredNorm());
  }
  return seeds;
}

Eigen::MatrixXd KMeansModel::standardize(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.cols() != feat_mean.size()) throw data_error("kmeans.dim_mismatch", "feature dimension does not match model");
  return (X.rowwise() - feat_mean.transpose()).array().rowwise() / feat_scale.transpose().array();
}

Eigen::MatrixXd KMeansModel::squared_distances(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  const Eigen::MatrixXd Z = standardize(X);
  Eigen::MatrixXd d2(Z.rows(), centers.rows());
  for (Eigen::Index k = 0; k < centers.rows(); ++k) d2.col(k) = (Z.rowwise() - centers.row(k)).rowwise().squaredNorm();
  return d2;
}

std::vector<int> KMeansModel::assign(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  const Eigen::MatrixXd d2 = squared_distances(X);
  std::vector<int> out(static_cast<std::size_t>(d2.rows()));
  for (Eigen::Index i = 0; i < d2.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < d2.cols(); ++k)
      if (d2(i, k) < d2(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Eigen::MatrixXd KMeansModel::posterior(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  const Eigen::MatrixXd d2 = squared_distances(X);
  if (d2.cols() != 2) return softmax_rows(-d2);
  Eigen::MatrixXd p(d2.rows(), 2);
  for (Eigen::Index i = 0; i < d2.rows(); ++i) {
    const double s = d2(i, 0) + d2(i, 1);
    if (s <= 0) {
      p(i, 0) = p(i, 1) = 0.5;
    } else {
      p(i, 0) = 1.0 - d2(i, 0) / s;
      p(i, 1) = 1.0 - d2(i, 1) / s;
    }
  }
  return p;
}

KMeansFit fit_kmeans(const Eigen::Ref<const Eigen::MatrixXd>& X, int K, std::uint64_t seed, int max_iter) {
  if (K < 1 || X.rows() < K) throw data_error("kmeans.n", "k-means needs at least K samples");
  if (!X.allFinite()) throw data_error("fit.non_finite", "features contain non-finite values");
  KMeansFit fit;
  auto& m = fit.model;
  m.feat_mean = X.colwise().mean().transpose();
  m.feat_scale = ((X.rowwise() - m.feat_mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < m.feat_scale.size(); ++j)
    if (!(m.feat_scale(j) > 0)) m.feat_scale(j) = 1.0;
  const Eigen::MatrixXd Z = m.standardize(X);

  const auto seeds = kmeanspp_seeds(Z, K, seed);
  m.centers = Z(seeds, Eigen::all);

  std::vector<int> labels(static_cast<std::size_t>(Z.rows()), -1);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd d2(Z.rows(), K);
    for (int k = 0; k < K; ++k) d2.col(k) = (Z.rowwise() - m.centers.row(k)).rowwise().squaredNorm();
    bool changed = false;
    double sse = 0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (d2(i, k) < d2(i, best)) best = k;
      auto& l = labels[static_cast<std::size_t>(i)];
      changed |= l != best;
      l = best;
      sse += d2(i, best);
    }
    fit.sse.push_back(sse);
    fit.iterations = it + 1;
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, Z.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      sums.row(l) += Z.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        m.centers.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
        continue;
      }
      // Empty cluster: move it to the sample farthest from its current center.
      Eigen::Index far = 0;
      double far_d = -1;
      for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const double d = d2(i, labels[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      m.centers.row(k) = Z.row(far);
      spdlog::warn("kmeans: cluster {} empty; reseeded at sample {}", k, far);
    }
  }
  return fit;
}

}  // namespace irseg
