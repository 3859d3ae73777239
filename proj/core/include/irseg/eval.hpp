#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irseg/features.hpp"
#include "irseg/grid.hpp"

namespace irseg {

/// Cloud (1) is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  double sensitivity() const;
  double specificity() const;
  double accuracy() const;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const std::uint8_t> y_true, std::span<const std::uint8_t> y_pred);
ConfusionMatrix confusion(const LabelMask& y_true, const LabelMask& y_pred);

/// sensitivity + specificity - 1; throws when either class is absent from the truth.
double j_statistic(const ConfusionMatrix& cm);

/// Threshold on the class-1 posterior equivalent to the lambda-weighted argmax.
inline double lambda_threshold(double lambda) { return 1.0 / (1.0 + lambda); }
/// Cloud iff p > 1 / (1 + lambda), i.e. p * lambda > 1 - p.
std::vector<std::uint8_t> apply_lambda(std::span<const double> posterior, double lambda);
LabelMask apply_lambda(const ProbabilityMap& posterior, double lambda);

/// n log-spaced values over [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t n);
/// 101 values over [1e-2, 1e2].
std::vector<double> default_lambda_grid();

struct RocPoint {
  double fpr = 0, tpr = 0, lambda = 1;
};

struct TunedThreshold {
  double lambda = 1.0;
  double j = 0.0;
  std::vector<RocPoint> roc;  // ordered by increasing lambda
};

/// Maximizes J over the user grid plus every data-induced threshold (midpoints
/// between consecutive distinct posteriors and both extremes). Ties go to the
/// lambda with the smallest |log lambda|, then the smaller lambda.
TunedThreshold tune_lambda(std::span<const double> posterior, std::span<const std::uint8_t> y_true,
                           std::span<const double> grid);
TunedThreshold tune_lambda(std::span<const double> posterior, std::span<const std::uint8_t> y_true);

// ---------------------------------------------------------------------------
// Leave-one-out cross-validation

/// One point of the search grid: a feature spec and named hyperparameters.
struct CvCandidate {
  FeatureSpec spec;
  std::vector<std::pair<std::string, double>> hyper;

  std::string label() const;
};

/// Output of fitting on all-but-one image and predicting the held-out one.
struct FoldPrediction {
  std::vector<double> posterior;
  std::vector<std::uint8_t> truth;
  double fit_seconds = 0;
  double predict_seconds = 0;
};

using FoldFn = std::function<FoldPrediction(const CvCandidate&, std::size_t held_out)>;

struct CvEntry {
  CvCandidate candidate;
  std::vector<std::optional<double>> fold_j;  // empty for skipped single-class folds
  std::vector<double> fold_lambda;
  double mean_j = 0;
  std::size_t scored_folds = 0;
  double fit_seconds = 0;      // total across folds
  double predict_seconds = 0;  // total across folds
};

struct CvReport {
  std::size_t folds = 0;
  std::vector<CvEntry> entries;  // in candidate order
  std::size_t selected = 0;
  /// lambda tuned on the pooled out-of-fold posteriors of the selected candidate.
  double pooled_lambda = 1.0;
  double pooled_j = 0.0;
  std::vector<std::string> warnings;

  const CvEntry& best() const { return entries.at(selected); }
};

/// Strict "a is preferred over b" order used for selection when mean J ties:
/// smaller expansion order, smaller neighborhood, then smaller hyperparameters.
bool cv_tie_preferred(const CvCandidate& a, const CvCandidate& b);

/// Evaluates every candidate on `n_images` leave-one-out folds (concurrently) and
/// selects the best mean validation J.
CvReport loo_cv(std::size_t n_images, const std::vector<CvCandidate>& candidates, const FoldFn& fold,
                std::span<const double> lambda_grid);

// ---------------------------------------------------------------------------
// Latency

struct LatencyStats {
  double mean_ms = 0;
  double median_ms = 0;
  double min_ms = 0;
  std::size_t samples = 0;
};

/// Times fn(frame) for every frame, `repetitions` times.
LatencyStats bench(std::size_t frames, int repetitions, const std::function<void(std::size_t)>& fn);

}  // namespace irseg
