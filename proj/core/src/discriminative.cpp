#include "irseg/discriminative.hpp"

#include <cmath>
#include <numbers>

#include "irseg/error.hpp"

namespace irseg {
namespace {

void check_xy(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (phi.rows() != y.size()) throw data_error("fit.shape", "design matrix and targets differ in length");
  if (!phi.allFinite() || !y.allFinite()) throw data_error("fit.nonfinite", "non-finite design matrix or targets");
}

void check_dim(const LinearModel& m, const Eigen::Ref<const Eigen::MatrixXd>& phi) {
  if (phi.cols() != m.w.size()) {
    throw data_error("predict.dim_mismatch", "expanded dimension " + std::to_string(phi.cols()) +
                                                 " does not match model dimension " + std::to_string(m.w.size()));
  }
}

// log sigma(a), stable for large |a|.
double log_sigmoid(double a) { return a >= 0 ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a)); }

}  // namespace

std::string to_string(LinearKind k) {
  switch (k) {
    case LinearKind::kRR: return "RR";
    case LinearKind::kSVC: return "SVC";
    case LinearKind::kGP: return "GP";
  }
  return "?";
}

double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double probit_sigmoid(double mu, double s2) {
  const double kappa = 1.0 / std::sqrt(1.0 + std::numbers::pi * s2 / 8.0);
  return sigmoid(kappa * mu);
}

// ---------------------------------------------------------------------------

LinearModel rr_fit(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                   double gamma) {
  if (!(gamma >= 0)) throw usage_error("rr.gamma", "ridge gamma must be >= 0");
  check_xy(phi, y);
  const auto d = phi.cols();
  Eigen::MatrixXd A = phi.transpose() * phi;
  A.diagonal().array() += gamma;
  const Eigen::VectorXd b = phi.transpose() * y;

  LinearModel m{LinearKind::kRR, Eigen::VectorXd::Zero(d), gamma, std::nullopt};
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    throw numerical_error("rr.singular", "normal equations are singular; use gamma > 0");
  }
  // LLT succeeds on numerically semi-definite matrices; reject a vanishing pivot.
  const Eigen::VectorXd piv = llt.matrixLLT().diagonal();
  const double scale = std::max(1.0, A.diagonal().cwiseAbs().maxCoeff());
  if (d > 0 && piv.minCoeff() * piv.minCoeff() <= 1e-13 * scale) {
    throw numerical_error("rr.singular", "normal equations are singular; use gamma > 0");
  }
  m.w = llt.solve(b);
  return m;
}

double rr_objective(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                    double gamma, const Eigen::Ref<const Eigen::VectorXd>& w) {
  return (phi * w - y).squaredNorm() + gamma * w.squaredNorm();
}

// ---------------------------------------------------------------------------

double svc_objective(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y, double C,
                     const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::ArrayXd slack = (1.0 - y.array() * (phi * w).array()).max(0.0);
  return 0.5 * w.squaredNorm() + C * slack.square().sum();
}

Eigen::VectorXd svc_gradient(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                             double C, const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::VectorXd slack = (1.0 - y.array() * (phi * w).array()).max(0.0).matrix();
  return w - 2.0 * C * phi.transpose() * (y.array() * slack.array()).matrix();
}

LinearModel svc_fit(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y, double C,
                    const SvcOptions& opts) {
  if (!(C >= 0)) throw usage_error("svc.C", "SVC C must be >= 0");
  check_xy(phi, y);
  bool pos = false, neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == 1.0) pos = true;
    else if (y(i) == -1.0) neg = true;
    else throw data_error("svc.labels", "SVC labels must be -1 or +1");
  }
  if (!pos || !neg) throw data_error("fit.single_class", "SVC needs both labels present");

  const auto d = phi.cols();
  LinearModel m{LinearKind::kSVC, Eigen::VectorXd::Zero(d), C, std::nullopt};
  if (C == 0) return m;

  Eigen::VectorXd g = svc_gradient(phi, y, C, m.w);
  double f = svc_objective(phi, y, C, m.w);
  double decrement = 0;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::ArrayXd margin = y.array() * (phi * m.w).array();
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
      if (margin(i) < 1.0) H.selfadjointView<Eigen::Lower>().rankUpdate(phi.row(i).transpose(), 2.0 * C);
    }
    H = H.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd step = H.llt().solve(-g);
    const double slope = g.dot(step);
    decrement = -0.5 * slope;
    if (decrement <= opts.tol * std::max(1.0, f)) return m;
    double t = 1.0;
    Eigen::VectorXd w_new = m.w + step;
    double f_new = svc_objective(phi, y, C, w_new);
    while (f_new > f + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      w_new = m.w + t * step;
      f_new = svc_objective(phi, y, C, w_new);
    }
    if (!(f_new <= f)) {
      // No representable descent left: accept only if the predicted gain is at round-off level.
      if (decrement <= 1e-10 * std::max(1.0, f)) return m;
      break;
    }
    m.w = w_new;
    f = f_new;
    g = svc_gradient(phi, y, C, m.w);
  }
  throw numerical_error("svc.nonconvergence", "SVC Newton did not converge; last gradient norm " +
                                                  std::to_string(g.norm()) + ", Newton decrement " +
                                                  std::to_string(decrement));
}

// ---------------------------------------------------------------------------

double gp_log_posterior(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                        double gamma_prior, const Eigen::Ref<const Eigen::VectorXd>& w) {
  const auto d = static_cast<double>(w.size());
  double lp = -0.5 * d * std::log(2 * std::numbers::pi) - 0.5 * d * std::log(gamma_prior) -
              0.5 * w.squaredNorm() / gamma_prior;
  const Eigen::VectorXd a = phi * w;
  for (Eigen::Index i = 0; i < a.size(); ++i) lp += y(i) * log_sigmoid(a(i)) + (1 - y(i)) * log_sigmoid(-a(i));
  return lp;
}

Eigen::VectorXd gp_gradient(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                            double gamma_prior, const Eigen::Ref<const Eigen::VectorXd>& w) {
  const Eigen::VectorXd yhat = (phi * w).unaryExpr([](double a) { return sigmoid(a); });
  return phi.transpose() * (y - yhat) - w / gamma_prior;
}

namespace {

Eigen::MatrixXd gp_precision(const Eigen::Ref<const Eigen::MatrixXd>& phi, double gamma_prior,
                             const Eigen::VectorXd& w) {
  const auto d = phi.cols();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d) / gamma_prior;
  const Eigen::VectorXd a = phi * w;
  const Eigen::VectorXd s = a.unaryExpr([](double v) {
    const double p = sigmoid(v);
    return p * (1 - p);
  });
  H.noalias() += phi.transpose() * s.asDiagonal() * phi;
  return H;
}

}  // namespace

LinearModel gp_fit(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                   double gamma_prior, const GpOptions& opts) {
  if (!(gamma_prior > 0)) throw usage_error("gp.gamma", "GP prior scale must be > 0");
  check_xy(phi, y);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw data_error("gp.labels", "GP labels must be 0 or 1");
  }
  const auto d = phi.cols();
  LinearModel m{LinearKind::kGP, Eigen::VectorXd::Zero(d), gamma_prior, std::nullopt};

  Eigen::VectorXd g = gp_gradient(phi, y, gamma_prior, m.w);
  double lp = gp_log_posterior(phi, y, gamma_prior, m.w);
  bool converged = false;
  double decrement = 0;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::LLT<Eigen::MatrixXd> llt(gp_precision(phi, gamma_prior, m.w));
    if (llt.info() != Eigen::Success) throw numerical_error("gp.hessian", "GP Hessian is not positive definite");
    const Eigen::VectorXd step = llt.solve(g);
    // Half the squared Newton decrement: predicted gain of the full step.
    decrement = 0.5 * g.dot(step);
    if (decrement <= opts.tol * std::max(1.0, std::abs(lp))) {
      converged = true;
      break;
    }
    double t = 1.0;
    Eigen::VectorXd w_new = m.w + step;
    double lp_new = gp_log_posterior(phi, y, gamma_prior, w_new);
    while (!(lp_new >= lp) && t > 1e-12) {
      t *= 0.5;
      w_new = m.w + t * step;
      lp_new = gp_log_posterior(phi, y, gamma_prior, w_new);
    }
    if (!(lp_new >= lp)) {
      // No representable ascent left: accept only if the remaining gain is at round-off level.
      converged = decrement <= 1e-10 * std::max(1.0, std::abs(lp));
      break;
    }
    m.w = w_new;
    lp = lp_new;
    g = gp_gradient(phi, y, gamma_prior, m.w);
  }
  if (!converged) {
    throw numerical_error("gp.nonconvergence", "GP Newton did not converge; last gradient norm " +
                                                   std::to_string(g.norm()) + ", Newton decrement " +
                                                   std::to_string(decrement));
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(gp_precision(phi, gamma_prior, m.w));
  if (llt.info() != Eigen::Success) throw numerical_error("gp.hessian", "GP Hessian is not positive definite");
  Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(d, d));
  m.sigma_n = 0.5 * (sigma + sigma.transpose());
  return m;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd predict_sigmoid(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& phi) {
  check_dim(model, phi);
  return (phi * model.w).unaryExpr([](double a) { return sigmoid(a); });
}

Eigen::VectorXd gp_predict(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& phi) {
  check_dim(model, phi);
  if (!model.sigma_n) throw usage_error("gp.no_covariance", "GP prediction needs a posterior covariance");
  const Eigen::VectorXd mu = phi * model.w;
  const Eigen::VectorXd s2 = (phi * *model.sigma_n).cwiseProduct(phi).rowwise().sum();
  Eigen::VectorXd p(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) p(i) = probit_sigmoid(mu(i), std::max(0.0, s2(i)));
  return p;
}

Eigen::VectorXd predict_proba(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& phi) {
  return model.kind == LinearKind::kGP ? gp_predict(model, phi) : predict_sigmoid(model, phi);
}

}  // namespace irseg
