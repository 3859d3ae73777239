#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irseg/dataset.hpp"
#include "irseg/eval.hpp"
#include "irseg/features.hpp"
#include "irseg/flow.hpp"
#include "irseg/segmenter.hpp"

namespace irseg {

struct PipelineOptions {
  SiteParams site;
  std::size_t clear_sky_capacity = 250;
  std::size_t persistence = 3;
  double background_quantile = 0.05;
  FlowParams flow;
};

/// Sorted *.pgm files of a directory (empty when the directory does not exist).
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Pushes the frames through a clear-sky buffer (every frame flagged clear) and
/// returns the median window artifact, or nothing when no frame was stored.
std::optional<TemperatureImage> estimate_window(const std::vector<TemperatureImage>& clear_frames,
                                                const PipelineOptions& opts);

/// T, H, T', H', dT, H'', I and |v| for one frame. Without a window artifact T' = T;
/// without a previous frame the velocity is zero.
FrameBundle build_bundle(const TemperatureImage& frame, const TemperatureImage* previous,
                         const TemperatureImage* window, const PipelineOptions& opts);

struct PreparedImage {
  std::string name;
  Split split = Split::kTrain;
  TemperatureImage frame;
  std::optional<TemperatureImage> previous;
  FrameBundle bundle;
  LabelMask labels;
};

std::vector<PreparedImage> prepare(const DatasetManifest& manifest, const TemperatureImage* window,
                                   const PipelineOptions& opts);
std::vector<PreparedImage> of_split(const std::vector<PreparedImage>& images, Split split);

/// A trained model plus everything needed to featurize new frames.
struct ModelFile {
  Segmenter model;
  PipelineOptions options;
  std::optional<TemperatureImage> window;

  std::string to_json() const;
  static ModelFile from_json(const std::string& text);
  static ModelFile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  FrameBundle bundle(const TemperatureImage& frame, const TemperatureImage* previous) const;
};

// ---------------------------------------------------------------------------
// Training and model selection

/// Search space of one model family.
struct ModelGrid {
  ModelKind kind = ModelKind::kGDA;
  Hyper base;
  std::vector<FeatureSpec> specs;
  std::vector<double> gammas;
  std::vector<double> Cs;
  std::vector<double> betas;
  std::vector<CliqueOrder> cliques;
};

/// Default grid: every variant x neighborhood at expansion order 1; gamma and C
/// log-spaced over [1e-4, 1e4]; beta over {0, 1, 2, 3, 4}; first-order cliques.
ModelGrid default_grid(ModelKind kind);
/// Names of the hyperparameters that the grid varies for `kind`.
std::vector<std::string> varied_hypers(ModelKind kind);
std::vector<CvCandidate> grid_candidates(const ModelGrid& grid);
Hyper candidate_hyper(const ModelGrid& grid, const CvCandidate& c);

/// Feature matrices of every image for each spec, computed once.
class FeatureCache {
 public:
  FeatureCache(const std::vector<PreparedImage>& images, const std::vector<FeatureSpec>& specs);
  const std::vector<FeatureMatrix>& get(const FeatureSpec& spec) const;

 private:
  std::map<std::string, std::vector<FeatureMatrix>> by_spec_;
};

CvReport cross_validate(const ModelGrid& grid, const std::vector<PreparedImage>& train,
                        std::span<const double> lambda_grid);

struct TrainResult {
  ModelFile file;
  std::optional<CvReport> cv;
};

/// Selects the grid point by leave-one-out CV (when at least two training images
/// exist), refits on every training image and sets lambda from the pooled
/// out-of-fold posteriors.
TrainResult train(const ModelGrid& grid, const std::vector<PreparedImage>& train_images,
                  const std::optional<TemperatureImage>& window, const PipelineOptions& opts,
                  std::span<const double> lambda_grid);

struct Evaluation {
  ConfusionMatrix cm;
  double j = 0;
  std::vector<std::optional<double>> per_image_j;
};

/// Pooled confusion over the images with the model's lambda.
Evaluation evaluate(const Segmenter& model, const std::vector<PreparedImage>& images);
/// Cloud posterior of every image.
std::vector<ProbabilityMap> posteriors(const Segmenter& model, const std::vector<PreparedImage>& images);

std::string cv_report_json(const CvReport& report, ModelKind kind);
std::string cv_timing_json(const CvReport& report, ModelKind kind);
/// Paper-style table (feature vector x neighborhood x J [x time]).
std::string cv_report_csv(const CvReport& report, bool with_timing = false);

}  // namespace irseg
