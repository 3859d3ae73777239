#include <doctest.h>

#include <cmath>
#include <random>

#include "irseg/mrf.hpp"
#include "test_util.hpp"

using namespace irseg;

namespace {

// Every unordered adjacent pair of the lattice, listed once.
std::vector<std::pair<std::size_t, std::size_t>> clique_pairs(std::size_t w, std::size_t h, CliqueOrder order) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < w * h; ++a) {
    for (std::size_t b = a + 1; b < w * h; ++b) {
      const long dr = std::labs(long(a / w) - long(b / w));
      const long dc = std::labs(long(a % w) - long(b % w));
      const bool first = dr + dc == 1;
      const bool diag = dr == 1 && dc == 1;
      if (first || (order == CliqueOrder::kSecond && diag)) out.emplace_back(a, b);
    }
  }
  return out;
}

double oracle_energy(const Eigen::MatrixXd& L, const std::vector<int>& y, double beta,
                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double e = 0;
  for (std::size_t i = 0; i < y.size(); ++i) e += L(static_cast<Eigen::Index>(i), y[i] > 0 ? 1 : 0);
  for (auto [a, b] : pairs) e += beta * y[a] * y[b];
  return e;
}

double exhaustive_map(const Eigen::MatrixXd& L, std::size_t w, std::size_t h, double beta, CliqueOrder order,
                      std::vector<int>* arg = nullptr) {
  const auto pairs = clique_pairs(w, h, order);
  const std::size_t n = w * h;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> y(n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1 ? 1 : -1;
    const double e = oracle_energy(L, y, beta, pairs);
    if (e > best) {
      best = e;
      if (arg) *arg = y;
    }
  }
  return best;
}

LatticeState state_from(const Eigen::MatrixXd& L, std::size_t w, std::size_t h, const std::vector<int>& y) {
  LatticeState s;
  s.width = w;
  s.height = h;
  s.loglik = L;
  for (int v : y) s.labels.push_back(static_cast<std::int8_t>(v));
  return s;
}

GaussianClassModel random_classes(std::mt19937& rng, Eigen::Index d) {
  std::normal_distribution<double> g(0, 1);
  std::vector<ClassGaussian> cls;
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd A(d, d);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
    Eigen::VectorXd mu(d);
    for (Eigen::Index i = 0; i < d; ++i) mu(i) = g(rng);
    cls.push_back({mu, A * A.transpose() + 0.3 * Eigen::MatrixXd::Identity(d, d), 0.5});
  }
  return GaussianClassModel(cls, 0.0);
}

FeatureMatrix random_features(std::mt19937& rng, std::size_t w, std::size_t h, Eigen::Index d) {
  std::normal_distribution<double> g(0, 1.5);
  FeatureMatrix f;
  f.width = w;
  f.height = h;
  f.values.resize(static_cast<Eigen::Index>(w * h), d);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = g(rng);
  return f;
}

}  // namespace

TEST_CASE("clique potential") {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(9, 2);
  auto s = state_from(L, 3, 3, std::vector<int>(9, 1));
  CHECK(clique_potential(s, 4, +1, 1.0, CliqueOrder::kFirst) == 4.0);
  CHECK(clique_potential(s, 4, -1, 1.0, CliqueOrder::kFirst) == -4.0);
  CHECK(clique_potential(s, 4, +1, 1.0, CliqueOrder::kSecond) == 8.0);
  CHECK(clique_potential(s, 0, +1, 1.0, CliqueOrder::kFirst) == 2.0);   // corner: two in-bounds neighbours
  CHECK(clique_potential(s, 0, +1, 1.0, CliqueOrder::kSecond) == 3.0);
  CHECK(clique_potential(s, 1, +1, 1.0, CliqueOrder::kFirst) == 3.0);   // edge
  s.labels[1] = s.labels[3] = s.labels[5] = s.labels[7] = -1;
  CHECK(clique_potential(s, 4, +1, 1.0, CliqueOrder::kFirst) == -4.0);
  std::mt19937 rng(1);
  for (auto& v : s.labels) v = rng() % 2 ? 1 : -1;
  for (std::size_t i = 0; i < 9; ++i) REQUIRE(clique_potential(s, i, 1, 0.0, CliqueOrder::kSecond) == 0.0);
}

TEST_CASE("neighbourhoods are symmetric") {
  for (auto order : {CliqueOrder::kFirst, CliqueOrder::kSecond}) {
    // Indicator lattices: the neighbour sum at i of a one-hot label at j is symmetric in (i, j).
    const std::size_t w = 4, h = 3;
    for (std::size_t i = 0; i < w * h; ++i) {
      for (std::size_t j = 0; j < w * h; ++j) {
        std::vector<int> yi(w * h, 0), yj(w * h, 0);
        yi[i] = 1;
        yj[j] = 1;
        const auto si = state_from(Eigen::MatrixXd::Zero(12, 2), w, h, yj);
        const auto sj = state_from(Eigen::MatrixXd::Zero(12, 2), w, h, yi);
        REQUIRE(neighbor_label_sum(si, i, order) == neighbor_label_sum(sj, j, order));
      }
    }
  }
}

TEST_CASE("pixel energy") {
  std::vector<ClassGaussian> cls{{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity(), 0.5},
                                 {Eigen::Vector2d(3, 3), Eigen::Matrix2d::Identity(), 0.5}};
  const GaussianClassModel m(cls, 0.0);
  CHECK(pixel_energy(Eigen::Vector2d(0, 0), -1, m, 0.0) == doctest::Approx(0.0));
  CHECK(pixel_energy(Eigen::Vector2d(1, 0), -1, m, 0.0) == doctest::Approx(-0.5));
  CHECK(pixel_energy(Eigen::Vector2d(3, 4), +1, m, 2.0) == doctest::Approx(1.5));
  // Softmax of equal energies.
  LatticeState s = state_from(Eigen::MatrixXd::Zero(1, 2), 1, 1, {1});
  CHECK(mrf_posterior(s, 1.0, CliqueOrder::kFirst)[0] == doctest::Approx(0.5));
  // The likelihood terms are the same quantity without psi.
  const auto L = energy_likelihood_terms(m, Eigen::RowVector2d(1, 2));
  CHECK(L(0, 0) == doctest::Approx(pixel_energy(Eigen::Vector2d(1, 2), -1, m, 0)));
  CHECK(L(0, 1) == doctest::Approx(pixel_energy(Eigen::Vector2d(1, 2), +1, m, 0)));
}

TEST_CASE("total energy counts each clique once") {
  std::mt19937 rng(2);
  std::normal_distribution<double> g(0, 1);
  for (auto order : {CliqueOrder::kFirst, CliqueOrder::kSecond}) {
    for (int t = 0; t < 20; ++t) {
      Eigen::MatrixXd L(12, 2);
      for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] = g(rng);
      std::vector<int> y(12);
      for (auto& v : y) v = rng() % 2 ? 1 : -1;
      const double beta = 0.3 * (t % 5);
      const auto s = state_from(L, 4, 3, y);
      REQUIRE(total_energy(s, beta, order) == doctest::Approx(oracle_energy(L, y, beta, clique_pairs(4, 3, order))));
    }
  }
}

TEST_CASE("map sweep: large beta with majority noise reaches the exhaustive MAP") {
  // Seven of nine pixels mildly prefer cloud; strong coupling makes all-cloud optimal.
  Eigen::MatrixXd L(9, 2);
  for (int i = 0; i < 9; ++i) {
    const bool noisy = i == 2 || i == 6;
    L(i, 0) = noisy ? 0.2 : 0.0;
    L(i, 1) = noisy ? 0.0 : 0.2;
  }
  auto s = ml_state(L, 3, 3, 5.0, CliqueOrder::kFirst);
  while (map_sweep(s, 5.0, CliqueOrder::kFirst) > 0) {
  }
  std::vector<int> arg;
  const double best = exhaustive_map(L, 3, 3, 5.0, CliqueOrder::kFirst, &arg);
  for (std::size_t i = 0; i < 9; ++i) REQUIRE(s.labels[i] == arg[i]);
  CHECK(s.energy == doctest::Approx(best));
}

TEST_CASE("map sweep: beta zero reproduces ML and is idempotent") {
  std::mt19937 rng(4);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd L(20, 2);
  for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] = g(rng);
  std::vector<int> y(20, -1);
  auto s = state_from(L, 5, 4, y);
  s.energy = total_energy(s, 0.0, CliqueOrder::kFirst);
  map_sweep(s, 0.0, CliqueOrder::kFirst);
  const auto ml = ml_state(L, 5, 4, 0.0, CliqueOrder::kFirst);
  CHECK(s.labels == ml.labels);
  const auto before = s.labels;
  CHECK(map_sweep(s, 0.0, CliqueOrder::kFirst) == 0);
  CHECK(s.labels == before);
}

TEST_CASE("map sweep: monotone energy, local maximum, exhaustive ordering") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> beta_d(0.0, 2.0);
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{3, 3}, {4, 3}, {4, 4}}) {
    for (int t = 0; t < 10; ++t) {
      const auto order = t % 2 ? CliqueOrder::kSecond : CliqueOrder::kFirst;
      const double beta = beta_d(rng);
      const auto classes = random_classes(rng, 2);
      const auto f = random_features(rng, w, h, 2);
      MrfModel model{classes, beta, order};
      auto s = ml_state(model, f);
      const double init = s.energy;
      double prev = init;
      for (int k = 0; k < 100; ++k) {
        const auto changed = map_sweep(s, beta, order);
        REQUIRE(s.energy >= prev - 1e-12);
        REQUIRE(s.energy == doctest::Approx(total_energy(s, beta, order)).epsilon(1e-12));
        prev = s.energy;
        if (!changed) break;
      }
      CHECK(s.energy >= init);
      // Local maximum: no single flip improves the energy.
      for (std::size_t i = 0; i < s.size(); ++i) {
        auto t2 = s;
        t2.labels[i] = static_cast<std::int8_t>(-t2.labels[i]);
        REQUIRE(total_energy(t2, beta, order) <= s.energy + 1e-9);
      }
      CHECK(exhaustive_map(s.loglik, w, h, beta, order) >= s.energy - 1e-9);
    }
  }
}

TEST_CASE("map sweep: optimal state is a fixed point") {
  std::mt19937 rng(10);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd L(9, 2);
  for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] = g(rng);
  std::vector<int> arg;
  const double best = exhaustive_map(L, 3, 3, 0.7, CliqueOrder::kSecond, &arg);
  auto s = state_from(L, 3, 3, arg);
  s.energy = total_energy(s, 0.7, CliqueOrder::kSecond);
  CHECK(s.energy == doctest::Approx(best));
  CHECK(map_sweep(s, 0.7, CliqueOrder::kSecond) == 0);
  CHECK(s.energy == doctest::Approx(best));
}

// ---------------------------------------------------------------------------
// Supervised fit

TEST_CASE("supervised fit equals GDA on the flattened data") {
  std::mt19937 rng(3);
  auto a = random_features(rng, 5, 4, 2), b = random_features(rng, 5, 4, 2);
  LabelMask ya(5, 4), yb(5, 4);
  for (std::size_t i = 0; i < 20; ++i) {
    ya[i] = i % 3 == 0;
    yb[i] = i % 2 == 0;
  }
  const auto m = fit_mrf_supervised({&a, &b}, {&ya, &yb}, 1.0, 0.5, CliqueOrder::kSecond);
  std::vector<std::uint8_t> y(ya.values().begin(), ya.values().end());
  y.insert(y.end(), yb.values().begin(), yb.values().end());
  Eigen::MatrixXd X(40, 2);
  X << a.values, b.values;
  const auto gda = fit_gda(X, y, 1.0);
  for (int k = 0; k < 2; ++k) {
    CHECK(m.classes.component(k).mean == gda.component(k).mean);
    CHECK(m.classes.component(k).cov == gda.component(k).cov);
  }
  CHECK(m.beta == 0.5);
  CHECK(m.gamma_cov() == 1.0);
  CHECK(m.order == CliqueOrder::kSecond);

  LabelMask all_clear(5, 4, std::uint8_t{0});
  CHECK(test::error_code_of([&] { fit_mrf_supervised({&a}, {&all_clear}, 1.0, 1.0, CliqueOrder::kFirst); }) ==
        "fit.class_size");
}

TEST_CASE("label symmetry: negated labels swap the classes and the output") {
  std::mt19937 rng(14);
  auto f = random_features(rng, 6, 5, 2);
  LabelMask y(6, 5), ny(6, 5);
  for (std::size_t i = 0; i < 30; ++i) {
    y[i] = f.values(static_cast<Eigen::Index>(i), 0) > 0;
    ny[i] = 1 - y[i];
  }
  const auto m = fit_mrf_supervised({&f}, {&y}, 0.5, 0.8, CliqueOrder::kFirst);
  const auto n = fit_mrf_supervised({&f}, {&ny}, 0.5, 0.8, CliqueOrder::kFirst);
  CHECK(m.classes.component(0).mean == n.classes.component(1).mean);
  CHECK(m.classes.component(1).cov == n.classes.component(0).cov);
  const auto a = map_iterate(m, f), b = map_iterate(n, f);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.labels[i] == -b.labels[i]);
}

// ---------------------------------------------------------------------------
// ICM

TEST_CASE("ICM recovers two constant regions") {
  std::mt19937 rng(21);
  std::normal_distribution<double> noise(0, 0.5);
  FeatureMatrix f;
  f.width = 20;
  f.height = 16;
  f.values.resize(320, 1);
  LabelMask truth(20, 16);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 20; ++c) {
      const bool hot = c >= 8 && r >= 4;
      truth(r, c) = hot;
      f.values(static_cast<Eigen::Index>(r * 20 + c), 0) = (hot ? 10.0 : 2.0) + noise(rng);
    }
  }
  IcmOptions o;
  o.gamma_cov = 1.0;
  o.beta = 1.0;
  o.seed = 5;
  const auto fit = icm_fit({&f}, o);
  const double m0 = fit.model.classes.component(0).mean(0), m1 = fit.model.classes.component(1).mean(0);
  const double lo = std::min(m0, m1), hi = std::max(m0, m1);
  CHECK(std::abs(lo - 2.0) < 0.5);
  CHECK(std::abs(hi - 10.0) < 0.5);
  const auto mask = fit.states.front().mask();
  std::size_t agree = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) agree += mask[i] == truth[i];
  CHECK((agree == mask.size() || agree == 0));

  for (std::size_t k = 1; k < fit.energy.size(); ++k) CHECK(fit.energy[k] > fit.energy[k - 1]);

  const auto again = icm_fit({&f}, o);
  CHECK(again.energy == fit.energy);
  CHECK(again.states.front().labels == fit.states.front().labels);
  CHECK(again.model.classes.component(0).mean == fit.model.classes.component(0).mean);
}

TEST_CASE("ICM argument checks") {
  FeatureMatrix tiny;
  tiny.width = 1;
  tiny.height = 2;
  tiny.values = Eigen::MatrixXd::Zero(2, 1);
  CHECK(test::error_code_of([&] { icm_fit({&tiny}, {}); }) == "icm.n");
  CHECK(test::error_code_of([&] { icm_fit({}, {}); }) == "icm.empty");
  FeatureMatrix bad;
  bad.width = 3;
  bad.height = 3;
  bad.values = Eigen::MatrixXd::Zero(4, 1);
  CHECK(test::error_code_of([&] { icm_fit({&bad}, {}); }) == "mrf.shape");
}

// ---------------------------------------------------------------------------
// Simulated annealing

TEST_CASE("SA acceptance rule") {
  CHECK(sa_accept(-1.0, 1.0, 0.999));
  CHECK(sa_accept(-1.0, 0.0, 0.999));
  CHECK(sa_accept(0.0, 0.0, 0.5));
  CHECK_FALSE(sa_accept(1e-9, 0.0, 0.0));
  CHECK_FALSE(sa_accept(1.0, 1e-300, 0.0));
  CHECK(sa_accept(1.0, 1.0, std::exp(-1.0) - 1e-12));
  CHECK_FALSE(sa_accept(1.0, 1.0, std::exp(-1.0) + 1e-12));
  CHECK(SaSchedule{}.alpha == 0.75);
}

TEST_CASE("SA sampling weights form a distribution") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd L(16, 2);
    for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] = g(rng);
    std::vector<int> y(16);
    for (auto& v : y) v = rng() % 2 ? 1 : -1;
    const auto s = state_from(L, 4, 4, y);
    const auto w = sa_sampling_weights(s, 0.6, CliqueOrder::kFirst);
    double sum = 0;
    double lo = std::numeric_limits<double>::infinity();
    std::vector<double> flip(16);
    for (std::size_t i = 0; i < 16; ++i) {
      REQUIRE(w[i] >= 0);
      sum += w[i];
      auto f = s;
      f.labels[i] = static_cast<std::int8_t>(-f.labels[i]);
      flip[i] = L(static_cast<Eigen::Index>(i), f.labels[i] > 0) + clique_potential(f, i, f.labels[i], 0.6,
                                                                                       CliqueOrder::kFirst);
      lo = std::min(lo, flip[i]);
    }
    REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-12));
    double total = 0;
    for (double v : flip) total += v - lo;
    for (std::size_t i = 0; i < 16; ++i) REQUIRE(w[i] == doctest::Approx((flip[i] - lo) / total).epsilon(1e-12));
  }
  const auto flat = state_from(Eigen::MatrixXd::Zero(4, 2), 2, 2, {1, 1, 1, 1});
  for (double v : sa_sampling_weights(flat, 0.0, CliqueOrder::kFirst)) CHECK(v == 0.25);
}

TEST_CASE("SA with beta zero and zero temperature returns the ML labelling") {
  std::mt19937 rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto classes = random_classes(rng, 2);
    const auto f = random_features(rng, 6, 5, 2);
    const MrfModel model{classes, 0.0, CliqueOrder::kFirst};
    SaSchedule sched;
    sched.initial_temperature = 0.0;
    sched.seed = static_cast<std::uint64_t>(t);
    sched.max_steps = 500;
    const auto res = sa_optimize(model, f, sched);
    REQUIRE(res.state.labels == ml_state(model, f).labels);
  }
}

TEST_CASE("SA returns the best visited state and keeps energies consistent") {
  std::mt19937 rng(19);
  for (int t = 0; t < 10; ++t) {
    const auto classes = random_classes(rng, 2);
    const auto f = random_features(rng, 8, 6, 2);
    const MrfModel model{classes, 0.9, t % 2 ? CliqueOrder::kSecond : CliqueOrder::kFirst};
    SaSchedule sched;
    sched.seed = static_cast<std::uint64_t>(t);
    sched.alpha = 0.99;
    sched.max_steps = 400;
    const auto init = ml_state(model, f);
    const auto res = sa_optimize(model, f, sched);
    REQUIRE(res.state.energy >= init.energy - 1e-9);
    REQUIRE(res.state.energy == doctest::Approx(total_energy(res.state, model.beta, model.order)));
    REQUIRE(res.steps == 400);
    REQUIRE(res.final_temperature == doctest::Approx(res.initial_temperature * std::pow(0.99, 400)).epsilon(1e-9));
    const auto again = sa_optimize(model, f, sched);
    REQUIRE(again.state.labels == res.state.labels);
  }
}

TEST_CASE("SA schedule validation") {
  const auto s = state_from(Eigen::MatrixXd::Zero(4, 2), 2, 2, {1, 1, 1, 1});
  SaSchedule bad;
  bad.alpha = 1.0;
  CHECK(test::error_code_of([&] { sa_optimize(s, 1.0, CliqueOrder::kFirst, bad); }) == "sa.alpha");
}

TEST_CASE("clique order names") {
  CHECK(parse_clique_order("first") == CliqueOrder::kFirst);
  CHECK(parse_clique_order(to_string(CliqueOrder::kSecond)) == CliqueOrder::kSecond);
  CHECK(test::error_code_of([] { parse_clique_order("third"); }) == "mrf.clique");
}
