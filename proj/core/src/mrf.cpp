#include "irseg/mrf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

namespace irseg {
namespace {

constexpr std::array<std::pair<int, int>, 8> kOffsets{{
    {-1, 0}, {0, -1}, {0, 1}, {1, 0}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1},
}};

std::size_t offset_count(CliqueOrder order) { return order == CliqueOrder::kFirst ? 4 : 8; }

template <class F>
void for_each_neighbor(std::size_t width, std::size_t height, std::size_t pixel, CliqueOrder order, F&& f) {
  const auto r = static_cast<std::ptrdiff_t>(pixel / width);
  const auto c = static_cast<std::ptrdiff_t>(pixel % width);
  const auto n = offset_count(order);
  for (std::size_t k = 0; k < n; ++k) {
    const auto rr = r + kOffsets[k].first;
    const auto cc = c + kOffsets[k].second;
    if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(height) || cc >= static_cast<std::ptrdiff_t>(width)) continue;
    f(static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc));
  }
}

inline Eigen::Index class_col(int label) { return label > 0 ? 1 : 0; }

// Fenwick tree over the flip energies; prefix sums of (e_i - floor) are recovered
// by subtracting floor * (number of covered elements).
class FlipSampler {
 public:
  explicit FlipSampler(const std::vector<double>& values) : n_(values.size()), tree_(values.size() + 1, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) add(i, values[i]);
    values_ = values;
    ordered_.insert(values.begin(), values.end());
  }

  void set(std::size_t i, double v) {
    ordered_.erase(ordered_.find(values_[i]));
    ordered_.insert(v);
    add(i, v - values_[i]);
    values_[i] = v;
  }

  double floor() const { return *ordered_.begin(); }

  /// Index whose cumulative weight first reaches u * total (u in [0, 1)).
  std::size_t sample(double u) const {
    const double lo = floor();
    const double total = prefix(n_) - lo * static_cast<double>(n_);
    if (!(total > 0)) return std::min(n_ - 1, static_cast<std::size_t>(u * static_cast<double>(n_)));
    double remaining = u * total;
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 <= n_) step *= 2;
    for (; step > 0; step /= 2) {
      const std::size_t next = pos + step;
      if (next <= n_) {
        const double w = tree_[next] - lo * static_cast<double>(step);
        if (w <= remaining) {
          remaining -= w;
          pos = next;
        }
      }
    }
    return std::min(pos, n_ - 1);
  }

 private:
  void add(std::size_t i, double delta) {
    for (std::size_t k = i + 1; k <= n_; k += k & (~k + 1)) tree_[k] += delta;
  }
  double prefix(std::size_t count) const {
    double s = 0;
    for (std::size_t k = count; k > 0; k -= k & (~k + 1)) s += tree_[k];
    return s;
  }

  std::size_t n_;
  std::vector<double> tree_;
  std::vector<double> values_;
  std::multiset<double> ordered_;
};

void check_features(const FeatureMatrix& features) {
  if (features.width * features.height != static_cast<std::size_t>(features.rows()) || features.rows() == 0) {
    throw data_error("mrf.shape", "MRF features must carry the image shape");
  }
}

}  // namespace

std::string to_string(CliqueOrder o) { return o == CliqueOrder::kFirst ? "first" : "second"; }

CliqueOrder parse_clique_order(const std::string& s) {
  if (s == "first" || s == "omega1" || s == "4") return CliqueOrder::kFirst;
  if (s == "second" || s == "omega2" || s == "8") return CliqueOrder::kSecond;
  throw usage_error("mrf.clique", "unknown clique order '" + s + "' (first|second)");
}

LabelMask LatticeState::mask() const {
  LabelMask m(width, height);
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] > 0 ? 1 : 0;
  return m;
}

Eigen::MatrixXd energy_likelihood_terms(const GaussianClassModel& classes, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (classes.num_classes() != 2) throw usage_error("mrf.classes", "MRF segmentation needs exactly two classes");
  Eigen::MatrixXd out(X.rows(), 2);
  for (std::size_t k = 0; k < 2; ++k) {
    out.col(static_cast<Eigen::Index>(k)) = -0.5 * (classes.mahalanobis(X, k).array() + classes.log_det(k));
  }
  return out;
}

int neighbor_label_sum(const LatticeState& state, std::size_t pixel, CliqueOrder order) {
  int s = 0;
  for_each_neighbor(state.width, state.height, pixel, order, [&](std::size_t j) { s += state.labels[j]; });
  return s;
}

double clique_potential(const LatticeState& state, std::size_t pixel, int candidate, double beta, CliqueOrder order) {
  return static_cast<double>(candidate) * beta * static_cast<double>(neighbor_label_sum(state, pixel, order));
}

double pixel_energy(const Eigen::Ref<const Eigen::VectorXd>& x, int candidate, const GaussianClassModel& classes,
                    double psi) {
  const Eigen::MatrixXd row = x.transpose();
  const auto k = static_cast<std::size_t>(class_col(candidate));
  return -0.5 * classes.log_det(k) - 0.5 * classes.mahalanobis(row, k)(0) + psi;
}

double total_energy(const LatticeState& state, double beta, CliqueOrder order) {
  double likelihood = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    likelihood += state.loglik(static_cast<Eigen::Index>(i), class_col(state.labels[i]));
    pairs += static_cast<double>(state.labels[i]) * neighbor_label_sum(state, i, order);
  }
  // Each clique appears twice in the per-pixel sums.
  return likelihood + 0.5 * beta * pairs;
}

LatticeState ml_state(const Eigen::MatrixXd& loglik, std::size_t width, std::size_t height, double beta,
                      CliqueOrder order) {
  LatticeState s;
  s.width = width;
  s.height = height;
  s.loglik = loglik;
  s.labels.resize(width * height);
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    s.labels[i] = loglik(r, 1) > loglik(r, 0) ? 1 : -1;
  }
  s.energy = total_energy(s, beta, order);
  return s;
}

LatticeState ml_state(const MrfModel& model, const FeatureMatrix& features) {
  check_features(features);
  return ml_state(energy_likelihood_terms(model.classes, features.values), features.width, features.height, model.beta,
                  model.order);
}

std::size_t map_sweep(LatticeState& state, double beta, CliqueOrder order) {
  std::size_t changed = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double s = neighbor_label_sum(state, i, order);
    const double e_cloud = state.loglik(r, 1) + beta * s;
    const double e_clear = state.loglik(r, 0) - beta * s;
    const int cur = state.labels[i];
    int next = cur;
    if (e_cloud > e_clear) next = 1;
    if (e_clear > e_cloud) next = -1;
    if (next != cur) {
      state.energy += (next > 0 ? e_cloud : e_clear) - (cur > 0 ? e_cloud : e_clear);
      state.labels[i] = static_cast<std::int8_t>(next);
      ++changed;
    }
  }
  return changed;
}

LatticeState map_iterate(const MrfModel& model, const FeatureMatrix& features, int max_sweeps) {
  LatticeState s = ml_state(model, features);
  for (int k = 0; k < max_sweeps; ++k) {
    if (map_sweep(s, model.beta, model.order) == 0) break;
  }
  return s;
}

ProbabilityMap mrf_posterior(const LatticeState& state, double beta, CliqueOrder order) {
  ProbabilityMap p(state.width, state.height);
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double s = neighbor_label_sum(state, i, order);
    const double diff = (state.loglik(r, 1) + beta * s) - (state.loglik(r, 0) - beta * s);
    p[i] = 1.0 / (1.0 + std::exp(-diff));
  }
  return p;
}

MrfModel fit_mrf_supervised(const std::vector<const FeatureMatrix*>& images, const std::vector<const LabelMask*>& labels,
                            double gamma_cov, double beta, CliqueOrder order) {
  if (images.size() != labels.size() || images.empty()) {
    throw data_error("mrf.fit", "need matching, non-empty image and label lists");
  }
  std::vector<std::uint8_t> y;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<std::size_t>(images[i]->rows()) != labels[i]->size()) {
      throw data_error("mrf.fit", "label mask does not match feature rows");
    }
    y.insert(y.end(), labels[i]->values().begin(), labels[i]->values().end());
  }
  const Eigen::MatrixXd X = stack_rows(images);
  return MrfModel{fit_gda(X, y, gamma_cov, CovarianceMode::kFull), beta, order};
}

// ---------------------------------------------------------------------------

IcmFit icm_fit(const std::vector<const FeatureMatrix*>& images, const IcmOptions& opts) {
  if (images.empty()) throw data_error("icm.empty", "ICM needs at least one image");
  for (const auto* im : images) check_features(*im);
  const Eigen::MatrixXd X = stack_rows(images);
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < 4) throw data_error("icm.n", "ICM needs at least 4 pixels");

  std::mt19937_64 rng(opts.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::uint8_t> y(n);
  for (int attempt = 0;; ++attempt) {
    std::size_t ones = 0;
    for (auto& v : y) {
      v = coin(rng) ? 1 : 0;
      ones += v;
    }
    if (ones >= 2 && n - ones >= 2) break;
    if (attempt > 100) throw data_error("icm.init", "could not draw a random initial labelling with both classes");
  }

  IcmFit fit;
  double best = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iter; ++it) {
    // Keep both classes populated.
    for (std::uint8_t k = 0; k < 2; ++k) {
      while (std::count(y.begin(), y.end(), k) < 2) {
        std::uniform_int_distribution<std::size_t> pick_img(0, images.size() - 1);
        const auto img = pick_img(rng);
        std::size_t offset = 0;
        for (std::size_t j = 0; j < img; ++j) offset += static_cast<std::size_t>(images[j]->rows());
        const auto w = images[img]->width, h = images[img]->height;
        const std::size_t block = std::min<std::size_t>(8, std::min(w, h));
        std::uniform_int_distribution<std::size_t> pr(0, h - block), pc(0, w - block);
        const auto r0 = pr(rng), c0 = pc(rng);
        for (std::size_t r = r0; r < r0 + block; ++r)
          for (std::size_t c = c0; c < c0 + block; ++c) y[offset + r * w + c] = k;
        ++fit.reseeds;
        spdlog::warn("icm: class {} collapsed at iteration {}; reseeded an {}x{} block", k, it, block, block);
      }
    }

    MrfModel model{fit_gda(X, y, opts.gamma_cov, CovarianceMode::kFull), opts.beta, opts.order};
    const Eigen::MatrixXd loglik = energy_likelihood_terms(model.classes, X);
    const double sweep_beta = (it == 0 && opts.likelihood_first_pass) ? 0.0 : opts.beta;

    std::vector<LatticeState> states;
    double energy = 0;
    std::size_t offset = 0;
    for (const auto* im : images) {
      const auto rows = static_cast<Eigen::Index>(im->rows());
      LatticeState s;
      s.width = im->width;
      s.height = im->height;
      s.loglik = loglik.middleRows(static_cast<Eigen::Index>(offset), rows);
      s.labels.resize(static_cast<std::size_t>(rows));
      for (std::size_t i = 0; i < s.labels.size(); ++i) s.labels[i] = y[offset + i] ? 1 : -1;
      s.energy = total_energy(s, sweep_beta, opts.order);
      map_sweep(s, sweep_beta, opts.order);
      s.energy = total_energy(s, opts.beta, opts.order);
      energy += s.energy;
      for (std::size_t i = 0; i < s.labels.size(); ++i) y[offset + i] = s.labels[i] > 0 ? 1 : 0;
      offset += static_cast<std::size_t>(rows);
      states.push_back(std::move(s));
    }
    fit.iterations = it + 1;
    if (!(energy > best)) break;
    best = energy;
    fit.energy.push_back(energy);
    fit.model = std::move(model);
    fit.states = std::move(states);
  }
  return fit;
}

// ---------------------------------------------------------------------------

bool sa_accept(double delta_e, double temperature, double u) {
  if (delta_e <= 0) return true;
  if (!(temperature > 0)) return false;
  return std::exp(-delta_e / temperature) > u;
}

namespace {

std::vector<double> flip_energies(const LatticeState& s, double beta, CliqueOrder order) {
  std::vector<double> e(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int flipped = -s.labels[i];
    e[i] = s.loglik(static_cast<Eigen::Index>(i), class_col(flipped)) +
           flipped * beta * neighbor_label_sum(s, i, order);
  }
  return e;
}

double current_energy(const LatticeState& s, std::size_t i, double beta, CliqueOrder order) {
  const int y = s.labels[i];
  return s.loglik(static_cast<Eigen::Index>(i), class_col(y)) + y * beta * neighbor_label_sum(s, i, order);
}

}  // namespace

std::vector<double> sa_sampling_weights(const LatticeState& state, double beta, CliqueOrder order) {
  auto e = flip_energies(state, beta, order);
  const double lo = *std::min_element(e.begin(), e.end());
  double total = 0;
  for (auto& v : e) {
    v -= lo;
    total += v;
  }
  for (auto& v : e) v = total > 0 ? v / total : 1.0 / static_cast<double>(e.size());
  return e;
}

SaResult sa_optimize(const MrfModel& model, const FeatureMatrix& features, const SaSchedule& schedule) {
  return sa_optimize(ml_state(model, features), model.beta, model.order, schedule);
}

SaResult sa_optimize(LatticeState state, double beta, CliqueOrder order, const SaSchedule& schedule) {
  if (!(schedule.alpha > 0 && schedule.alpha < 1)) throw usage_error("sa.alpha", "cooling factor must lie in (0, 1)");
  const std::size_t n = state.size();
  if (n == 0) throw data_error("sa.empty", "empty lattice");

  SaResult res;
  std::vector<double> flip = flip_energies(state, beta, order);
  double temperature = schedule.initial_temperature;
  if (temperature < 0) {
    // Standard deviation of |dE| over all pixels.
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::abs(current_energy(state, i, beta, order) - flip[i]);
      sum += d;
      sum2 += d * d;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
    temperature = var > 0 ? std::sqrt(var) : 1.0;
  }
  res.initial_temperature = temperature;

  FlipSampler sampler(flip);
  std::mt19937_64 rng(schedule.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t steps = schedule.max_steps ? schedule.max_steps : n;

  double best_energy = state.energy;
  std::vector<std::size_t> since_best;  // flips applied after the best state

  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t i = sampler.sample(unif(rng));
    const double e_cur = current_energy(state, i, beta, order);
    const double delta = e_cur - flip[i];
    const double u = unif(rng);
    if (sa_accept(delta, temperature, u)) {
      state.labels[i] = static_cast<std::int8_t>(-state.labels[i]);
      state.energy -= delta;
      flip[i] = e_cur;
      sampler.set(i, e_cur);
      for_each_neighbor(state.width, state.height, i, order, [&](std::size_t j) {
        // The neighbour sum of j moved by 2 * y_i(new); its flip energy moves accordingly.
        const double ds = 2.0 * state.labels[i];
        flip[j] += -state.labels[j] * beta * ds;
        sampler.set(j, flip[j]);
      });
      ++res.accepted;
      if (state.energy > best_energy) {
        best_energy = state.energy;
        since_best.clear();
      } else {
        since_best.push_back(i);
      }
    }
    temperature *= schedule.alpha;
    res.steps = t + 1;
  }
  res.final_temperature = temperature;
  for (auto it = since_best.rbegin(); it != since_best.rend(); ++it) {
    state.labels[*it] = static_cast<std::int8_t>(-state.labels[*it]);
  }
  state.energy = total_energy(state, beta, order);
  res.state = std::move(state);
  return res;
}

}  // namespace irseg
