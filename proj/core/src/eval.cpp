#include "irseg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "irseg/error.hpp"
#include "irseg/parallel.hpp"

namespace irseg {

double ConfusionMatrix::sensitivity() const {
  if (tp + fn == 0) throw data_error("eval.undefined_j", "undefined J: no cloud pixels in ground truth");
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double ConfusionMatrix::specificity() const {
  if (tn + fp == 0) throw data_error("eval.undefined_j", "undefined J: no clear pixels in ground truth");
  return static_cast<double>(tn) / static_cast<double>(tn + fp);
}

double ConfusionMatrix::accuracy() const {
  if (total() == 0) throw data_error("eval.empty", "empty confusion matrix");
  return static_cast<double>(tp + tn) / static_cast<double>(total());
}

ConfusionMatrix confusion(std::span<const std::uint8_t> y_true, std::span<const std::uint8_t> y_pred) {
  if (y_true.size() != y_pred.size()) throw data_error("eval.shape", "prediction and truth differ in size");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool t = y_true[i] != 0, p = y_pred[i] != 0;
    if (t && p) ++cm.tp;
    else if (t) ++cm.fn;
    else if (p) ++cm.fp;
    else ++cm.tn;
  }
  return cm;
}

ConfusionMatrix confusion(const LabelMask& y_true, const LabelMask& y_pred) {
  require_same_shape(y_true, y_pred, "confusion");
  return confusion(y_true.values(), y_pred.values());
}

double j_statistic(const ConfusionMatrix& cm) { return cm.sensitivity() + cm.specificity() - 1.0; }

std::vector<std::uint8_t> apply_lambda(std::span<const double> posterior, double lambda) {
  const double tau = lambda_threshold(lambda);
  std::vector<std::uint8_t> out(posterior.size());
  for (std::size_t i = 0; i < posterior.size(); ++i) out[i] = posterior[i] > tau ? 1 : 0;
  return out;
}

LabelMask apply_lambda(const ProbabilityMap& posterior, double lambda) {
  LabelMask m(posterior.width(), posterior.height());
  const auto v = apply_lambda(posterior.values(), lambda);
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0) || !(hi >= lo) || n == 0) throw usage_error("grid.range", "log grid needs 0 < lo <= hi and n >= 1");
  std::vector<double> g(n);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = n == 1 ? lo : std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return g;
}

std::vector<double> default_lambda_grid() { return log_grid(1e-2, 1e2, 101); }

// ---------------------------------------------------------------------------

namespace {

struct ThresholdScorer {
  std::vector<double> sorted;          // ascending posteriors
  std::vector<std::uint64_t> pos_le;   // positives among sorted[0..i)
  std::uint64_t pos = 0, neg = 0;

  ThresholdScorer(std::span<const double> p, std::span<const std::uint8_t> y) {
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    sorted.resize(p.size());
    pos_le.assign(p.size() + 1, 0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      sorted[k] = p[idx[k]];
      pos_le[k + 1] = pos_le[k] + (y[idx[k]] ? 1 : 0);
    }
    pos = pos_le.back();
    neg = p.size() - pos;
  }

  ConfusionMatrix at(double tau) const {
    const auto k = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), tau) - sorted.begin());
    ConfusionMatrix cm;
    cm.fn = pos_le[k];
    cm.tn = k - pos_le[k];
    cm.tp = pos - cm.fn;
    cm.fp = neg - cm.tn;
    return cm;
  }
};

}  // namespace

TunedThreshold tune_lambda(std::span<const double> posterior, std::span<const std::uint8_t> y_true,
                           std::span<const double> grid) {
  if (posterior.size() != y_true.size()) throw data_error("eval.shape", "posterior and truth differ in size");
  for (double p : posterior) {
    if (!(p >= 0 && p <= 1)) throw data_error("eval.posterior", "posteriors must lie in [0, 1]");
  }
  const ThresholdScorer scorer(posterior, y_true);
  if (scorer.pos == 0 || scorer.neg == 0) {
    throw data_error("eval.single_class", "lambda tuning needs both classes in the ground truth");
  }

  std::vector<double> lambdas;
  for (double l : grid) {
    if (!(l > 0) || !std::isfinite(l)) throw usage_error("eval.lambda", "lambda grid values must be finite and > 0");
    lambdas.push_back(l);
  }
  const auto add_tau = [&](double tau) {
    if (tau > 0 && tau < 1) {
      const double l = (1.0 - tau) / tau;
      if (l > 0 && std::isfinite(l)) lambdas.push_back(l);
    }
  };
  const auto& s = scorer.sorted;
  add_tau(0.5 * s.front());
  add_tau(0.5 * (s.back() + 1.0));
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    if (s[k] < s[k + 1]) add_tau(s[k] + 0.5 * (s[k + 1] - s[k]));
  }
  if (lambdas.empty()) throw usage_error("eval.lambda", "empty lambda grid");
  std::sort(lambdas.begin(), lambdas.end());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());

  TunedThreshold best;
  best.j = -std::numeric_limits<double>::infinity();
  best.roc.reserve(lambdas.size());
  for (double l : lambdas) {
    const ConfusionMatrix cm = scorer.at(lambda_threshold(l));
    const double j = j_statistic(cm);
    best.roc.push_back({1.0 - cm.specificity(), cm.sensitivity(), l});
    const bool better = j > best.j || (j == best.j && std::abs(std::log(l)) < std::abs(std::log(best.lambda)));
    if (better) {
      best.j = j;
      best.lambda = l;
    }
  }
  return best;
}

TunedThreshold tune_lambda(std::span<const double> posterior, std::span<const std::uint8_t> y_true) {
  const auto g = default_lambda_grid();
  return tune_lambda(posterior, y_true, g);
}

// ---------------------------------------------------------------------------

std::string CvCandidate::label() const {
  std::string s = spec.label();
  for (const auto& [k, v] : hyper) s += " " + k + "=" + fmt::format("{:g}", v);
  return s;
}

bool cv_tie_preferred(const CvCandidate& a, const CvCandidate& b) {
  if (a.spec.expansion_order != b.spec.expansion_order) return a.spec.expansion_order < b.spec.expansion_order;
  if (a.spec.neighborhood != b.spec.neighborhood) return a.spec.neighborhood < b.spec.neighborhood;
  const auto n = std::min(a.hyper.size(), b.hyper.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.hyper[i].second != b.hyper[i].second) return a.hyper[i].second < b.hyper[i].second;
  }
  return false;
}

CvReport loo_cv(std::size_t n_images, const std::vector<CvCandidate>& candidates, const FoldFn& fold,
                std::span<const double> lambda_grid) {
  if (n_images < 2) throw data_error("cv.folds", "leave-one-out needs at least 2 training images");
  if (candidates.empty()) throw usage_error("cv.grid", "empty cross-validation grid");

  const std::size_t tasks = candidates.size() * n_images;
  std::vector<FoldPrediction> results(tasks);
  parallel_for(tasks, [&](std::size_t t) {
    results[t] = fold(candidates[t / n_images], t % n_images);
  });

  CvReport report;
  report.folds = n_images;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    CvEntry e;
    e.candidate = candidates[c];
    double sum = 0;
    for (std::size_t f = 0; f < n_images; ++f) {
      const auto& r = results[c * n_images + f];
      e.fit_seconds += r.fit_seconds;
      e.predict_seconds += r.predict_seconds;
      const bool has_pos = std::any_of(r.truth.begin(), r.truth.end(), [](auto v) { return v != 0; });
      const bool has_neg = std::any_of(r.truth.begin(), r.truth.end(), [](auto v) { return v == 0; });
      if (!has_pos || !has_neg) {
        e.fold_j.emplace_back();
        e.fold_lambda.push_back(std::numeric_limits<double>::quiet_NaN());
        if (c == 0) {
          const std::string w = "fold " + std::to_string(f) + " has single-class labels; its J is skipped";
          spdlog::warn("cv: {}", w);
          report.warnings.push_back(w);
        }
        continue;
      }
      const auto tuned = tune_lambda(r.posterior, r.truth, lambda_grid);
      e.fold_j.emplace_back(tuned.j);
      e.fold_lambda.push_back(tuned.lambda);
      sum += tuned.j;
      ++e.scored_folds;
    }
    if (e.scored_folds == 0) throw data_error("cv.no_folds", "every validation fold is single-class");
    e.mean_j = sum / static_cast<double>(e.scored_folds);
    report.entries.push_back(std::move(e));
  }

  for (std::size_t c = 1; c < report.entries.size(); ++c) {
    const auto& cur = report.entries[c];
    const auto& best = report.entries[report.selected];
    if (cur.mean_j > best.mean_j ||
        (cur.mean_j == best.mean_j && cv_tie_preferred(cur.candidate, best.candidate))) {
      report.selected = c;
    }
  }

  std::vector<double> pooled_p;
  std::vector<std::uint8_t> pooled_y;
  for (std::size_t f = 0; f < n_images; ++f) {
    const auto& r = results[report.selected * n_images + f];
    pooled_p.insert(pooled_p.end(), r.posterior.begin(), r.posterior.end());
    pooled_y.insert(pooled_y.end(), r.truth.begin(), r.truth.end());
  }
  const auto pooled = tune_lambda(pooled_p, pooled_y, lambda_grid);
  report.pooled_lambda = pooled.lambda;
  report.pooled_j = pooled.j;
  return report;
}

// ---------------------------------------------------------------------------

LatencyStats bench(std::size_t frames, int repetitions, const std::function<void(std::size_t)>& fn) {
  if (frames == 0) throw usage_error("bench.empty", "benchmark needs at least one frame");
  if (repetitions < 1) throw usage_error("bench.repetitions", "repetitions must be >= 1");
  std::vector<double> ms;
  ms.reserve(frames * static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    for (std::size_t f = 0; f < frames; ++f) {
      const auto t0 = std::chrono::steady_clock::now();
      fn(f);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  LatencyStats s;
  s.samples = ms.size();
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  s.min_ms = ms.front();
  const auto n = ms.size();
  s.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return s;
}

}  // namespace irseg
