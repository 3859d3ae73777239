#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irseg/dataset.hpp"
#include "irseg/grid.hpp"

namespace irseg {

// ---------------------------------------------------------------------------
// Temperature -> height mapping

/// Pluggable temperature-to-height map.
class HeightModel {
 public:
  virtual ~HeightModel() = default;
  virtual double height_km(double temperature_ck) const = 0;
};

/// Linear lapse approximation: H = elevation + (T_surface - T) / lapse,
/// clamped to [elevation, tropopause].
class LinearLapseHeightModel final : public HeightModel {
 public:
  explicit LinearLapseHeightModel(SiteParams site);
  double height_km(double temperature_ck) const override;

 private:
  SiteParams site_;
};

HeightImage malr_height(const TemperatureImage& frame, const SiteParams& site);
HeightImage malr_height(const TemperatureImage& frame, const HeightModel& model);

// ---------------------------------------------------------------------------
// Persistent window model

/// Rolling set of the most recent clear-sky frames.
class ClearSkyBuffer {
 public:
  explicit ClearSkyBuffer(std::size_t capacity = 250, std::size_t persistence = 3);

  /// Records the sky condition of `frame`; the frame is stored only when the last
  /// `persistence` conditions (this one included) were all clear.
  /// Returns true if the frame was appended.
  bool update(const TemperatureImage& frame, bool is_clear);

  std::size_t size() const { return frames_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t persistence() const { return persistence_; }
  bool empty() const { return frames_.empty(); }
  const std::deque<TemperatureImage>& frames() const { return frames_; }

 private:
  std::size_t capacity_;
  std::size_t persistence_;
  std::deque<TemperatureImage> frames_;
  std::deque<bool> recent_;
};

/// Per-pixel median over the buffered frames (mean of the two middle values for even counts).
TemperatureImage window_artifact(const ClearSkyBuffer& buffer);
/// T' = T - artifact + spatial mean of the artifact, floored at 0.
TemperatureImage remove_window_artifact(const TemperatureImage& frame, const TemperatureImage& artifact);

// ---------------------------------------------------------------------------
// Atmospheric background

class BackgroundModel {
 public:
  virtual ~BackgroundModel() = default;
  /// Estimated tropopause (background) temperature of the frame, centikelvin.
  virtual double tropopause_temperature(const TemperatureImage& frame) const = 0;
};

/// Background = q-quantile (lower order statistic) of the frame's temperatures.
class QuantileBackground final : public BackgroundModel {
 public:
  explicit QuantileBackground(double quantile = 0.05);
  double tropopause_temperature(const TemperatureImage& frame) const override;
  double quantile() const { return quantile_; }

 private:
  double quantile_;
};

struct BackgroundResidual {
  TemperatureImage delta;   // signed, T' - T_tropopause
  HeightImage height_diff;  // (H(T_trop) - H(T')) * T_trop[K], floored at 0
  double tropopause_temperature = 0;
};

BackgroundResidual background_residual(const TemperatureImage& t_prime, const BackgroundModel& model,
                                       const SiteParams& site);

/// i = round(255 * clamp((dT - min dT) / feasible, 0, 1)).
ByteImage normalize_8bit(const TemperatureImage& delta, const SiteParams& site);

// ---------------------------------------------------------------------------
// Feature vectors

enum class FeatureVariant { kX1, kX2, kX3, kX4 };
enum class Neighborhood { kSingle, kFirstOrder, kSecondOrder };

std::string to_string(FeatureVariant v);
std::string to_string(Neighborhood n);
FeatureVariant parse_variant(const std::string& s);
Neighborhood parse_neighborhood(const std::string& s);

/// Number of pixels contributing to one row: 1, 5 or 9.
std::size_t neighborhood_size(Neighborhood n);
/// Base features of a variant: 2 for X1..X3, 3 for X4.
std::size_t variant_dim(FeatureVariant v);

struct FeatureSpec {
  FeatureVariant variant = FeatureVariant::kX1;
  Neighborhood neighborhood = Neighborhood::kSingle;
  int expansion_order = 1;
  double expansion_bias = 1.0;

  std::size_t raw_dim() const { return variant_dim(variant) * neighborhood_size(neighborhood); }
  std::string label() const;
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Every variant x neighborhood pair at the given expansion order.
std::vector<FeatureSpec> all_feature_specs(int expansion_order = 1, double bias = 1.0);

/// All derived fields of one frame; fields a variant does not need may be absent.
struct FrameBundle {
  std::optional<TemperatureImage> t;
  std::optional<HeightImage> h;
  std::optional<TemperatureImage> t_prime;
  std::optional<HeightImage> h_prime;
  std::optional<TemperatureImage> delta_t;
  std::optional<HeightImage> h_second;
  std::optional<ByteImage> intensity;
  std::optional<Grid<double>> velocity_magnitude;

  std::size_t width() const;
  std::size_t height() const;
};

/// Row-per-pixel design matrix (row-major pixel order).
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> columns;
  std::size_t width = 0;
  std::size_t height = 0;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

FeatureMatrix assemble(const FrameBundle& bundle, const FeatureSpec& spec);

/// Row-wise concatenation of several images' matrices (image shape is dropped).
Eigen::MatrixXd stack_rows(const std::vector<const FeatureMatrix*>& parts);

}  // namespace irseg
