#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

namespace irseg {

enum class LinearKind { kRR, kSVC, kGP };

std::string to_string(LinearKind k);

/// Primal linear classifier over an already-expanded design matrix.
struct LinearModel {
  LinearKind kind = LinearKind::kRR;
  Eigen::VectorXd w;
  /// gamma for RR, C for SVC, prior scale gamma for GP.
  double hyper = 1.0;
  /// Laplace posterior covariance (GP only).
  std::optional<Eigen::MatrixXd> sigma_n;
};

/// Closed-form ridge regression, w = (Phi^T Phi + gamma I)^-1 Phi^T y.
LinearModel rr_fit(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                   double gamma);
/// ||Phi w - y||^2 + gamma ||w||^2
double rr_objective(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                    double gamma, const Eigen::Ref<const Eigen::VectorXd>& w);

struct SvcOptions {
  int max_iter = 200;
  /// Stop once half the squared Newton decrement is below tol * max(1, objective).
  double tol = 1e-13;
};

/// L2-regularized squared-hinge SVC, labels in {-1, +1}; Newton on the active set
/// with backtracking line search.
LinearModel svc_fit(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y, double C,
                    const SvcOptions& opts = {});
/// 1/2 ||w||^2 + C sum max(0, 1 - y_i w^T phi_i)^2
double svc_objective(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y, double C,
                     const Eigen::Ref<const Eigen::VectorXd>& w);
Eigen::VectorXd svc_gradient(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                             double C, const Eigen::Ref<const Eigen::VectorXd>& w);

struct GpOptions {
  int max_iter = 100;
  /// Stop once half the squared Newton decrement is below tol * max(1, |log-posterior|).
  double tol = 1e-13;
};

/// Bayesian logistic regression with prior N(0, gamma I): MAP by Newton with step
/// halving, Laplace covariance at the mode. Labels in {0, 1}.
LinearModel gp_fit(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                   double gamma_prior, const GpOptions& opts = {});
/// Log-posterior including the normalizing prior terms.
double gp_log_posterior(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                        double gamma_prior, const Eigen::Ref<const Eigen::VectorXd>& w);
/// Phi^T (y - y_hat) - w / gamma
Eigen::VectorXd gp_gradient(const Eigen::Ref<const Eigen::MatrixXd>& phi, const Eigen::Ref<const Eigen::VectorXd>& y,
                            double gamma_prior, const Eigen::Ref<const Eigen::VectorXd>& w);

double sigmoid(double a);
/// sigma(kappa * mu) with kappa = (1 + pi s2 / 8)^-1/2.
double probit_sigmoid(double mu, double s2);

/// Class-1 probability sigma(w^T phi) per row (RR, SVC).
Eigen::VectorXd predict_sigmoid(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& phi);
/// Class-1 probability with the probit-approximated predictive integral (GP).
Eigen::VectorXd gp_predict(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& phi);
/// Dispatches on the model kind.
Eigen::VectorXd predict_proba(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& phi);

}  // namespace irseg
