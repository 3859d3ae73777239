#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "irseg/discriminative.hpp"
#include "test_util.hpp"

using namespace irseg;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd random_matrix(std::mt19937& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> g(0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Eigen::VectorXd noisy_labels(std::mt19937& rng, const Eigen::MatrixXd& phi, bool pm) {
  std::normal_distribution<double> g(0, 1);
  Eigen::VectorXd w(phi.cols());
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = g(rng);
  Eigen::VectorXd y(phi.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const bool one = phi.row(i).dot(w) + 0.7 * g(rng) > 0;
    y(i) = one ? 1.0 : (pm ? -1.0 : 0.0);
  }
  return y;
}

// Objective written out directly.
double svc_obj(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double C, const Eigen::VectorXd& w) {
  double loss = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double h = std::max(0.0, 1.0 - y(i) * phi.row(i).dot(w));
    loss += h * h;
  }
  return 0.5 * w.squaredNorm() + C * loss;
}

// Generic smooth convex minimizer: Nesterov-accelerated gradient descent with a
// Lipschitz step, gradient by central differences of the objective.
template <class F>
Eigen::VectorXd agd_minimize(F f, Eigen::VectorXd x, double L, int iters) {
  Eigen::VectorXd prev = x, g(x.size());
  for (int k = 1; k <= iters; ++k) {
    const Eigen::VectorXd v = x + (k - 1.0) / (k + 2.0) * (x - prev);
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(v(j)));
      Eigen::VectorXd a = v, b = v;
      a(j) += h;
      b(j) -= h;
      g(j) = (f(a) - f(b)) / (2 * h);
    }
    prev = x;
    x = v - g / L;
  }
  return x;
}

double gp_logpost_oracle(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double gamma, const Eigen::VectorXd& w) {
  double s = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-phi.row(i).dot(w)));
    s += y(i) * std::log(p) + (1 - y(i)) * std::log(1 - p);
  }
  const double d = static_cast<double>(w.size());
  return s - w.squaredNorm() / (2 * gamma) - 0.5 * d * std::log(2 * kPi * gamma);
}

}  // namespace

// ---------------------------------------------------------------------------
// Ridge regression

TEST_CASE("RR closed-form examples") {
  Eigen::MatrixXd phi(2, 1);
  phi << 1, 2;
  const Eigen::Vector2d y(2, 4);
  CHECK(rr_fit(phi, y, 0.0).w(0) == doctest::Approx(2.0));
  CHECK(rr_fit(phi, y, 5.0).w(0) == doctest::Approx(1.0));
  CHECK(rr_fit(phi, Eigen::Vector2d::Zero(), 1.0).w(0) == 0.0);
  CHECK(rr_fit(phi, y, 5.0).hyper == 5.0);
}

TEST_CASE("RR solves the normal equations and agrees with gradient descent") {
  std::mt19937 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto phi = random_matrix(rng, 30, 4);
    const Eigen::VectorXd y = noisy_labels(rng, phi, false);
    const double gamma = std::pow(10.0, t % 5 - 2);
    const auto m = rr_fit(phi, y, gamma);
    const Eigen::VectorXd grad = 2 * phi.transpose() * (phi * m.w - y) + 2 * gamma * m.w;
    REQUIRE(grad.norm() < 1e-8);
    // Plain gradient descent on the squared objective.
    const Eigen::MatrixXd H = 2 * (phi.transpose() * phi + gamma * Eigen::MatrixXd::Identity(4, 4));
    const double L = H.eigenvalues().real().maxCoeff();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
    for (int k = 0; k < 20000; ++k) w -= (2 * phi.transpose() * (phi * w - y) + 2 * gamma * w) / L;
    REQUIRE((w - m.w).norm() < 1e-6);
    REQUIRE(rr_objective(phi, y, gamma, m.w) <= rr_objective(phi, y, gamma, w) + 1e-12);
  }
}

TEST_CASE("RR errors") {
  Eigen::MatrixXd phi(2, 2);
  phi << 1, 1, 2, 2;
  CHECK(test::error_code_of([&] { rr_fit(phi, Eigen::Vector2d(1, 0), 0.0); }) == "rr.singular");
  CHECK(test::error_code_of([&] { rr_fit(phi, Eigen::Vector2d(1, 0), -1.0); }) == "rr.gamma");
  CHECK(test::error_code_of([&] { rr_fit(phi, Eigen::Vector3d(1, 0, 1), 1.0); }) == "fit.shape");
}

// ---------------------------------------------------------------------------
// SVC

TEST_CASE("SVC: two-point instance") {
  Eigen::MatrixXd phi(2, 1);
  phi << -1, 1;
  const Eigen::Vector2d y(-1, 1);
  // 1/2 w^2 + 200 (1 - w)^2 for w < 1, minimized at 400 / 401.
  CHECK(svc_fit(phi, y, 100.0).w(0) == doctest::Approx(400.0 / 401.0).epsilon(1e-12));
  CHECK(svc_fit(phi, y, 0.0).w(0) == 0.0);
}

TEST_CASE("SVC objective matches a generic convex solver") {
  std::mt19937 rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto phi = random_matrix(rng, 10, 3);
    Eigen::VectorXd y = noisy_labels(rng, phi, true);
    y(0) = 1;
    y(1) = -1;
    const double C = std::pow(10.0, t % 4 - 1);
    const auto m = svc_fit(phi, y, C);
    REQUIRE(svc_objective(phi, y, C, m.w) == doctest::Approx(svc_obj(phi, y, C, m.w)).epsilon(1e-12));
    const double L = 1 + 2 * C * (phi.transpose() * phi).eigenvalues().real().maxCoeff();
    const auto w = agd_minimize([&](const Eigen::VectorXd& v) { return svc_obj(phi, y, C, v); },
                                Eigen::VectorXd::Zero(3), L, 20000);
    const double f_lib = svc_obj(phi, y, C, m.w), f_oracle = svc_obj(phi, y, C, w);
    REQUIRE(std::abs(f_lib - f_oracle) < 1e-6);
    REQUIRE(f_lib <= f_oracle + 1e-9);
    REQUIRE(svc_gradient(phi, y, C, m.w).norm() < 1e-6);
  }
}

TEST_CASE("SVC is the minimizer: beats RR and zero, convex along segments") {
  std::mt19937 rng(6);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 20; ++t) {
    const auto phi = random_matrix(rng, 40, 5);
    Eigen::VectorXd y = noisy_labels(rng, phi, true);
    y(0) = 1;
    y(1) = -1;
    const double C = 1.0;
    const auto m = svc_fit(phi, y, C);
    const auto rr = rr_fit(phi, y, 1.0);
    REQUIRE(svc_obj(phi, y, C, m.w) <= svc_obj(phi, y, C, rr.w) + 1e-12);
    REQUIRE(svc_obj(phi, y, C, m.w) <= svc_obj(phi, y, C, Eigen::VectorXd::Zero(5)) + 1e-12);
    const auto a = random_matrix(rng, 5, 1).col(0), b = random_matrix(rng, 5, 1).col(0);
    const Eigen::VectorXd mid = 0.5 * (a + b);
    REQUIRE(svc_obj(phi, y, C, mid) <= 0.5 * (svc_obj(phi, y, C, a) + svc_obj(phi, y, C, b)) + 1e-12);
  }
}

TEST_CASE("SVC errors") {
  Eigen::MatrixXd phi(2, 1);
  phi << -1, 1;
  CHECK(test::error_code_of([&] { svc_fit(phi, Eigen::Vector2d(1, 1), 1.0); }) == "fit.single_class");
  CHECK(test::error_code_of([&] { svc_fit(phi, Eigen::Vector2d(0, 1), 1.0); }) == "svc.labels");
  CHECK(test::error_code_of([&] { svc_fit(phi, Eigen::Vector2d(-1, 1), -1.0); }) == "svc.C");
  SvcOptions o;
  o.max_iter = 0;
  try {
    svc_fit(phi, Eigen::Vector2d(-1, 1), 100.0, o);
    FAIL("expected non-convergence");
  } catch (const Error& e) {
    CHECK(e.code() == "svc.nonconvergence");
    CHECK(std::string(e.what()).find("gradient norm") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// GP

TEST_CASE("GP: empty dataset returns the prior") {
  const auto m = gp_fit(Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), 2.5);
  CHECK(m.w.isZero());
  REQUIRE(m.sigma_n.has_value());
  CHECK(m.sigma_n->isApprox(2.5 * Eigen::MatrixXd::Identity(3, 3)));
}

TEST_CASE("GP: log-posterior and gradient match independent oracles") {
  std::mt19937 rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto phi = random_matrix(rng, 25, 4);
    const Eigen::VectorXd y = noisy_labels(rng, phi, false);
    const double gamma = 0.5 + t * 0.3;
    const Eigen::VectorXd w = random_matrix(rng, 4, 1, 0.7).col(0);
    REQUIRE(gp_log_posterior(phi, y, gamma, w) == doctest::Approx(gp_logpost_oracle(phi, y, gamma, w)).epsilon(1e-12));
    const Eigen::VectorXd g = gp_gradient(phi, y, gamma, w);
    Eigen::VectorXd fd(4);
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-5;
      Eigen::VectorXd a = w, b = w;
      a(j) += h;
      b(j) -= h;
      fd(j) = (gp_logpost_oracle(phi, y, gamma, a) - gp_logpost_oracle(phi, y, gamma, b)) / (2 * h);
    }
    REQUIRE((g - fd).norm() / std::max(1e-12, fd.norm()) < 1e-4);
  }
}

TEST_CASE("GP: MAP is a stationary point and the covariance is SPD") {
  std::mt19937 rng(10);
  for (int t = 0; t < 10; ++t) {
    const auto phi = random_matrix(rng, 60, 3);
    const Eigen::VectorXd y = noisy_labels(rng, phi, false);
    const auto m = gp_fit(phi, y, 3.0);
    REQUIRE(gp_gradient(phi, y, 3.0, m.w).norm() < 1e-6);
    const Eigen::MatrixXd& S = *m.sigma_n;
    REQUIRE((S - S.transpose()).norm() < 1e-12);
    REQUIRE(S.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > 0);
    // Laplace covariance oracle: inverse of Phi^T diag(p(1-p)) Phi + I / gamma.
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(3, 3) / 3.0;
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-phi.row(i).dot(m.w)));
      H += p * (1 - p) * phi.row(i).transpose() * phi.row(i);
    }
    REQUIRE((S - H.inverse()).norm() < 1e-9);
    // No ascent direction from random perturbations.
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd d = random_matrix(rng, 3, 1, 0.01).col(0);
      REQUIRE(gp_log_posterior(phi, y, 3.0, m.w + d) <= gp_log_posterior(phi, y, 3.0, m.w) + 1e-12);
    }
  }
}

TEST_CASE("GP: separable data stays bounded by the prior") {
  Eigen::MatrixXd phi(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    const double x = i < 10 ? -1.0 - i : 1.0 + (i - 10);
    phi.row(i) << x, 1.0;
    y(i) = i >= 10;
  }
  const double gamma = 0.1;
  const auto m = gp_fit(phi, y, gamma);
  CHECK(std::isfinite(m.w.norm()));
  // Log-posterior at the mode must beat w = 0, which bounds ||w||^2 / (2 gamma) by n log 2.
  CHECK(m.w.squaredNorm() / (2 * gamma) <= 20 * std::log(2.0));
  const auto p = gp_predict(m, phi);
  for (int i = 0; i < 20; ++i) REQUIRE((p(i) > 0.5) == (y(i) == 1.0));
}

TEST_CASE("GP errors") {
  Eigen::MatrixXd phi(2, 1);
  phi << -1, 1;
  CHECK(test::error_code_of([&] { gp_fit(phi, Eigen::Vector2d(0, 1), 0.0); }) == "gp.gamma");
  CHECK(test::error_code_of([&] { gp_fit(phi, Eigen::Vector2d(-1, 1), 1.0); }) == "gp.labels");
  LinearModel bare;
  bare.kind = LinearKind::kGP;
  bare.w = Eigen::VectorXd::Zero(1);
  CHECK(test::error_code_of([&] { gp_predict(bare, phi); }) == "gp.no_covariance");
}

// ---------------------------------------------------------------------------
// Prediction

TEST_CASE("sigmoid prediction") {
  LinearModel m;
  m.w = Eigen::VectorXd::Zero(2);
  const auto phi = Eigen::MatrixXd::Ones(3, 2);
  const Eigen::VectorXd p0 = predict_sigmoid(m, phi);
  for (Eigen::Index i = 0; i < p0.size(); ++i) CHECK(p0(i) == 0.5);
  m.w << 1, -1;
  CHECK(predict_sigmoid(m, phi)(0) == 0.5);
  double prev = 0;
  for (double s = -50; s <= 50; s += 0.5) {
    m.w << s, 0;
    const double p = predict_sigmoid(m, Eigen::RowVector2d(1, 0))(0);
    REQUIRE(p >= prev);
    prev = p;
  }
  CHECK(prev > 0.999999);
  CHECK(test::error_code_of([&] { predict_sigmoid(m, Eigen::MatrixXd::Ones(1, 3)); }) == "predict.dim_mismatch");
}

TEST_CASE("probit approximation") {
  CHECK(probit_sigmoid(0.0, 7.0) == 0.5);
  CHECK(probit_sigmoid(1.3, 0.0) == sigmoid(1.3));
  // Monotone non-increasing in the variance for positive mean.
  double prev = 1;
  for (double s2 = 0; s2 < 50; s2 += 0.25) {
    const double p = probit_sigmoid(0.8, s2);
    REQUIRE(p <= prev);
    prev = p;
  }
  // sigma^2 = 0 reduces GP prediction to the sigmoid.
  LinearModel m;
  m.kind = LinearKind::kGP;
  m.w = Eigen::Vector2d(0.4, -1.1);
  m.sigma_n = Eigen::MatrixXd::Zero(2, 2);
  const Eigen::MatrixXd phi = Eigen::MatrixXd::Random(5, 2);
  CHECK((gp_predict(m, phi) - predict_sigmoid(m, phi)).norm() == 0.0);
}

TEST_CASE("probit approximation agrees with Monte Carlo") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mu_d(-4, 4), s2_d(0, 9);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 10; ++t) {
    const double mu = mu_d(rng), s2 = s2_d(rng);
    double acc = 0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) acc += 1.0 / (1.0 + std::exp(-(mu + std::sqrt(s2) * g(rng))));
    REQUIRE(std::abs(probit_sigmoid(mu, s2) - acc / n) < 0.02);
  }
}

TEST_CASE("predictions are invariant to training row order") {
  std::mt19937 rng(13);
  const auto phi = random_matrix(rng, 50, 3);
  const Eigen::VectorXd y01 = noisy_labels(rng, phi, false);
  const Eigen::VectorXd ypm = 2 * y01.array() - 1;
  std::vector<int> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd phi_p(50, 3);
  Eigen::VectorXd y01_p(50), ypm_p(50);
  for (int i = 0; i < 50; ++i) {
    phi_p.row(i) = phi.row(perm[i]);
    y01_p(i) = y01(perm[i]);
    ypm_p(i) = ypm(perm[i]);
  }
  const auto probe = random_matrix(rng, 10, 3);
  CHECK((predict_proba(rr_fit(phi, y01, 1.0), probe) - predict_proba(rr_fit(phi_p, y01_p, 1.0), probe)).norm() < 1e-10);
  CHECK((predict_proba(svc_fit(phi, ypm, 1.0), probe) - predict_proba(svc_fit(phi_p, ypm_p, 1.0), probe)).norm() <
        1e-10);
  CHECK((predict_proba(gp_fit(phi, y01, 1.0), probe) - predict_proba(gp_fit(phi_p, y01_p, 1.0), probe)).norm() <
        1e-10);
}
