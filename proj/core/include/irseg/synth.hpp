#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irseg/dataset.hpp"
#include "irseg/grid.hpp"

namespace irseg {

/// One Gaussian cloud blob; positions in pixels at the scene's frame time t = 0.
struct CloudBlob {
  double row = 0, col = 0;
  double sigma_row = 8, sigma_col = 8;
  double peak = 3000;             // centikelvin above background
  double v_row = 0, v_col = 0;    // px / frame
};

struct SceneConfig {
  std::uint64_t seed = 2017;
  std::size_t width = 80;
  std::size_t height = 60;
  std::size_t frames = 12;
  std::size_t train_frames = 7;

  double background = 22500;         // centikelvin, cold tropopause-like sky
  double background_jitter = 1500;   // per-frame offset drawn from +-jitter
  double gradient = 150;             // largest per-frame spatial ramp amplitude

  std::size_t min_clouds = 1;
  std::size_t max_clouds = 4;
  double min_peak = 2000;
  double max_peak = 4000;
  double min_sigma = 5;
  double max_sigma = 14;
  double max_drift = 1.5;            // px / frame on each axis

  double noise_sigma = 30;
  double mask_fraction = 0.10;       // of the frame's largest peak

  double window_amplitude = 800;     // warm radial lens pattern
  std::size_t debris_spots = 6;
  double min_debris = 200;
  double max_debris = 600;
  std::size_t clear_sky_frames = 30;

  /// The first frame of each split is cloud-free; the second is heavily covered.
  bool clear_frame_per_split = true;
  bool heavy_frame_per_split = true;
  double heavy_coverage = 0.6;

  void validate(const SiteParams& site = {}) const;
};

struct SyntheticFrame {
  TemperatureImage frame;
  TemperatureImage previous;
  LabelMask mask;
  LabelMask previous_mask;
  std::vector<CloudBlob> clouds;
  Split split = Split::kTrain;
  std::string timestamp;
};

struct SyntheticScene {
  std::vector<SyntheticFrame> frames;
  std::vector<TemperatureImage> clear_sky;
  TemperatureImage window;  // the fixed lens artifact
};

/// Cloud contribution of the blobs at frame time t, per pixel.
Grid<double> cloud_field(const std::vector<CloudBlob>& clouds, std::size_t width, std::size_t height, double t);
/// Pixels whose noiseless cloud contribution exceeds `threshold`.
LabelMask threshold_mask(const Grid<double>& field, double threshold);

SyntheticScene generate(const SceneConfig& config);

/// Cloud-pixel fraction of each mask.
std::vector<double> coverage(const std::vector<LabelMask>& masks);
double coverage(const LabelMask& mask);

/// Writes frames/, labels/, clear_sky/, manifest.csv and scene.json under `dir`.
/// Returns the manifest path.
std::filesystem::path write_dataset(const SyntheticScene& scene, const SceneConfig& config,
                                    const std::filesystem::path& dir);

std::string scene_config_json(const SceneConfig& config);

}  // namespace irseg
