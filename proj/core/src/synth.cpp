#include "irseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "irseg/error.hpp"
#include "irseg/pgm.hpp"

namespace irseg {
namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

TemperatureImage make_window(const SceneConfig& c) {
  std::mt19937_64 rng(derive_seed(c.seed, 1000003));
  TemperatureImage w(c.width, c.height, 0.0);
  const double w_ = static_cast<double>(c.width), h_ = static_cast<double>(c.height);
  const double r0 = uniform(rng, 0.3, 0.7) * h_, c0 = uniform(rng, 0.3, 0.7) * w_;
  const double s = 0.3 * std::min(w_, h_);
  struct Spot { double r, c, a; };
  std::vector<Spot> spots;
  for (std::size_t k = 0; k < c.debris_spots; ++k) {
    spots.push_back({uniform(rng, 0, h_ - 1), uniform(rng, 0, w_ - 1), uniform(rng, c.min_debris, c.max_debris)});
  }
  for (std::size_t r = 0; r < c.height; ++r) {
    for (std::size_t col = 0; col < c.width; ++col) {
      const double dr = static_cast<double>(r) - r0, dc = static_cast<double>(col) - c0;
      double v = c.window_amplitude * std::exp(-(dr * dr + dc * dc) / (2 * s * s));
      for (const auto& sp : spots) {
        const double er = static_cast<double>(r) - sp.r, ec = static_cast<double>(col) - sp.c;
        v += sp.a * std::exp(-(er * er + ec * ec) / (2 * 1.5 * 1.5));
      }
      w(r, col) = v;
    }
  }
  return w;
}

struct Sky {
  double level = 0, gx = 0, gy = 0;
};

Sky draw_sky(const SceneConfig& c, std::mt19937_64& rng) {
  Sky s;
  s.level = c.background + uniform(rng, -c.background_jitter, c.background_jitter);
  const double amp = uniform(rng, 0, c.gradient);
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  s.gx = amp * std::cos(theta);
  s.gy = amp * std::sin(theta);
  return s;
}

TemperatureImage render(const SceneConfig& c, const Sky& sky, const TemperatureImage& window,
                        const Grid<double>& clouds, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  TemperatureImage t(c.width, c.height);
  const double cx = 0.5 * static_cast<double>(c.width - 1), cy = 0.5 * static_cast<double>(c.height - 1);
  for (std::size_t r = 0; r < c.height; ++r) {
    for (std::size_t col = 0; col < c.width; ++col) {
      const double ramp = (sky.gx * (static_cast<double>(col) - cx) / (cx + 1) +
                           sky.gy * (static_cast<double>(r) - cy) / (cy + 1));
      const double n = c.noise_sigma * std::clamp(noise(rng), -5.0, 5.0);
      const double v = sky.level + ramp + window(r, col) + clouds(r, col) + n;
      t(r, col) = std::clamp(std::round(v), 0.0, 65535.0);
    }
  }
  return t;
}

CloudBlob draw_blob(const SceneConfig& c, std::mt19937_64& rng, double sigma_lo, double sigma_hi) {
  CloudBlob b;
  b.row = uniform(rng, 0, static_cast<double>(c.height - 1));
  b.col = uniform(rng, 0, static_cast<double>(c.width - 1));
  b.sigma_row = uniform(rng, sigma_lo, sigma_hi);
  b.sigma_col = uniform(rng, sigma_lo, sigma_hi);
  b.peak = uniform(rng, c.min_peak, c.max_peak);
  b.v_row = uniform(rng, -c.max_drift, c.max_drift);
  b.v_col = uniform(rng, -c.max_drift, c.max_drift);
  return b;
}

double mask_threshold(const SceneConfig& c, const std::vector<CloudBlob>& clouds) {
  double peak = 0;
  for (const auto& b : clouds) peak = std::max(peak, b.peak);
  return c.mask_fraction * peak;
}

std::string timestamp_for(std::size_t index) {
  // One frame per day, all at local noon.
  const int month = 1 + static_cast<int>(index / 28);
  const int day = 1 + static_cast<int>(index % 28);
  return fmt::format("2017-{:02d}-{:02d}T12:00:00", month, day);
}

}  // namespace

void SceneConfig::validate(const SiteParams& site) const {
  if (width < 3 || height < 3) throw usage_error("synth.size", "scene must be at least 3x3");
  if (train_frames > frames) throw usage_error("synth.split", "train_frames exceeds frames");
  if (max_peak > site.feasible_delta_ck()) {
    throw usage_error("synth.peak", "cloud peak exceeds the feasible temperature difference");
  }
  if (!(min_peak > 0) || min_peak > max_peak) throw usage_error("synth.peak", "need 0 < min_peak <= max_peak");
  if (!(min_sigma > 0) || min_sigma > max_sigma) throw usage_error("synth.sigma", "need 0 < min_sigma <= max_sigma");
  if (min_clouds > max_clouds) throw usage_error("synth.clouds", "min_clouds exceeds max_clouds");
  if (max_drift < 0 || max_drift > 0.25 * static_cast<double>(std::min(width, height))) {
    throw usage_error("synth.drift", "drift must be non-negative and below a quarter of the frame");
  }
  if (noise_sigma < 0) throw usage_error("synth.noise", "noise sigma must be >= 0");
  if (!(mask_fraction > 0 && mask_fraction < 1)) throw usage_error("synth.mask", "mask fraction must lie in (0, 1)");
  if (!(heavy_coverage >= 0 && heavy_coverage < 1)) throw usage_error("synth.heavy", "heavy coverage must lie in [0, 1)");
}

Grid<double> cloud_field(const std::vector<CloudBlob>& clouds, std::size_t width, std::size_t height, double t) {
  Grid<double> f(width, height, 0.0);
  for (const auto& b : clouds) {
    const double r0 = b.row + b.v_row * t, c0 = b.col + b.v_col * t;
    for (std::size_t r = 0; r < height; ++r) {
      const double dr = (static_cast<double>(r) - r0) / b.sigma_row;
      for (std::size_t c = 0; c < width; ++c) {
        const double dc = (static_cast<double>(c) - c0) / b.sigma_col;
        f(r, c) += b.peak * std::exp(-0.5 * (dr * dr + dc * dc));
      }
    }
  }
  return f;
}

LabelMask threshold_mask(const Grid<double>& field, double threshold) {
  LabelMask m(field.width(), field.height());
  for (std::size_t i = 0; i < field.size(); ++i) m[i] = field[i] > threshold ? 1 : 0;
  return m;
}

SyntheticScene generate(const SceneConfig& c) {
  c.validate();
  SyntheticScene scene;
  scene.window = make_window(c);

  for (std::size_t f = 0; f < c.frames; ++f) {
    std::mt19937_64 rng(derive_seed(c.seed, f));
    const Split split = f < c.train_frames ? Split::kTrain : Split::kTest;
    const std::size_t pos = split == Split::kTrain ? f : f - c.train_frames;

    SyntheticFrame out;
    out.split = split;
    out.timestamp = timestamp_for(f);
    const Sky sky = draw_sky(c, rng);

    const bool clear = c.clear_frame_per_split && pos == 0;
    const bool heavy = c.heavy_frame_per_split && pos == 1;
    if (heavy) {
      // Add large blobs until the target coverage is reached; never fully overcast.
      for (int guard = 0; guard < 64; ++guard) {
        out.clouds.push_back(draw_blob(c, rng, c.max_sigma, 1.5 * c.max_sigma));
        const auto mask = threshold_mask(cloud_field(out.clouds, c.width, c.height, 0.0), mask_threshold(c, out.clouds));
        if (coverage(mask) >= c.heavy_coverage) break;
      }
    } else if (!clear) {
      const auto n = std::uniform_int_distribution<std::size_t>(c.min_clouds, c.max_clouds)(rng);
      for (std::size_t k = 0; k < n; ++k) out.clouds.push_back(draw_blob(c, rng, c.min_sigma, c.max_sigma));
    }

    const double thr = mask_threshold(c, out.clouds);
    const auto now = cloud_field(out.clouds, c.width, c.height, 0.0);
    const auto before = cloud_field(out.clouds, c.width, c.height, -1.0);
    out.mask = out.clouds.empty() ? LabelMask(c.width, c.height, 0) : threshold_mask(now, thr);
    out.previous_mask = out.clouds.empty() ? LabelMask(c.width, c.height, 0) : threshold_mask(before, thr);
    out.previous = render(c, sky, scene.window, before, rng);
    out.frame = render(c, sky, scene.window, now, rng);
    scene.frames.push_back(std::move(out));
  }

  const Grid<double> no_clouds(c.width, c.height, 0.0);
  for (std::size_t k = 0; k < c.clear_sky_frames; ++k) {
    std::mt19937_64 rng(derive_seed(c.seed, 500000 + k));
    const Sky sky = draw_sky(c, rng);
    scene.clear_sky.push_back(render(c, sky, scene.window, no_clouds, rng));
  }
  return scene;
}

double coverage(const LabelMask& mask) {
  if (mask.empty()) return 0.0;
  std::size_t n = 0;
  for (auto v : mask.values()) n += v ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

std::vector<double> coverage(const std::vector<LabelMask>& masks) {
  std::vector<double> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(coverage(m));
  return out;
}

std::string scene_config_json(const SceneConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["seed"] = c.seed;
  j["width"] = c.width;
  j["height"] = c.height;
  j["frames"] = c.frames;
  j["train_frames"] = c.train_frames;
  j["background"] = c.background;
  j["background_jitter"] = c.background_jitter;
  j["gradient"] = c.gradient;
  j["min_clouds"] = c.min_clouds;
  j["max_clouds"] = c.max_clouds;
  j["min_peak"] = c.min_peak;
  j["max_peak"] = c.max_peak;
  j["min_sigma"] = c.min_sigma;
  j["max_sigma"] = c.max_sigma;
  j["max_drift"] = c.max_drift;
  j["noise_sigma"] = c.noise_sigma;
  j["mask_fraction"] = c.mask_fraction;
  j["window_amplitude"] = c.window_amplitude;
  j["debris_spots"] = c.debris_spots;
  j["min_debris"] = c.min_debris;
  j["max_debris"] = c.max_debris;
  j["clear_sky_frames"] = c.clear_sky_frames;
  j["clear_frame_per_split"] = c.clear_frame_per_split;
  j["heavy_frame_per_split"] = c.heavy_frame_per_split;
  j["heavy_coverage"] = c.heavy_coverage;
  return j.dump(2) + "\n";
}

std::filesystem::path write_dataset(const SyntheticScene& scene, const SceneConfig& config,
                                    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  DatasetManifest manifest;
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const auto& s = scene.frames[f];
    const auto frame = dir / "frames" / fmt::format("frame_{:03d}.pgm", f);
    const auto prev = dir / "frames" / fmt::format("prev_{:03d}.pgm", f);
    const auto labels = dir / "labels" / fmt::format("mask_{:03d}.pgm", f);
    write_frame(frame, s.frame);
    write_frame(prev, s.previous);
    write_mask(labels, s.mask);
    manifest.entries.push_back({frame, labels, Timestamp::parse(s.timestamp), s.split, prev});
  }
  for (std::size_t k = 0; k < scene.clear_sky.size(); ++k) {
    write_frame(dir / "clear_sky" / fmt::format("clear_{:03d}.pgm", k), scene.clear_sky[k]);
  }
  const auto manifest_path = dir / "manifest.csv";
  write_file_atomic(manifest_path, format_manifest(manifest, dir));
  write_file_atomic(dir / "scene.json", scene_config_json(config));
  return manifest_path;
}

}  // namespace irseg
