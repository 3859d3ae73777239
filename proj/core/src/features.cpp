#include "irseg/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <utility>

namespace irseg {

LinearLapseHeightModel::LinearLapseHeightModel(SiteParams site) : site_(site) { site_.validate(); }

double LinearLapseHeightModel::height_km(double temperature_ck) const {
  const double h = site_.site_elevation + (site_.surface_temperature - temperature_ck) / site_.lapse_ck_per_km();
  return std::clamp(h, site_.site_elevation, site_.tropopause_height);
}

HeightImage malr_height(const TemperatureImage& frame, const HeightModel& model) {
  HeightImage out(frame.width(), frame.height());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = model.height_km(frame[i]);
  return out;
}

HeightImage malr_height(const TemperatureImage& frame, const SiteParams& site) {
  return malr_height(frame, LinearLapseHeightModel(site));
}

ClearSkyBuffer::ClearSkyBuffer(std::size_t capacity, std::size_t persistence)
    : capacity_(capacity), persistence_(persistence) {
  if (capacity_ == 0) throw usage_error("buffer.capacity", "clear-sky buffer capacity must be positive");
  if (persistence_ == 0) throw usage_error("buffer.persistence", "persistence window must be positive");
}

bool ClearSkyBuffer::update(const TemperatureImage& frame, bool is_clear) {
  if (!frames_.empty()) require_same_shape(frames_.front(), frame, "clear-sky buffer");
  recent_.push_back(is_clear);
  while (recent_.size() > persistence_) recent_.pop_front();
  const bool persistent_clear =
      recent_.size() == persistence_ && std::all_of(recent_.begin(), recent_.end(), [](bool c) { return c; });
  if (!persistent_clear) return false;
  if (frames_.size() == capacity_) frames_.pop_front();
  frames_.push_back(frame);
  return true;
}

TemperatureImage window_artifact(const ClearSkyBuffer& buffer) {
  if (buffer.empty()) throw data_error("buffer.empty", "window artifact needs at least one clear-sky frame");
  const auto& frames = buffer.frames();
  const auto& first = frames.front();
  TemperatureImage out(first.width(), first.height());
  std::vector<double> column(frames.size());
  const std::size_t mid = column.size() / 2;
  for (std::size_t px = 0; px < first.size(); ++px) {
    for (std::size_t k = 0; k < frames.size(); ++k) column[k] = frames[k][px];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid), column.end());
    double m = column[mid];
    if (column.size() % 2 == 0) {
      const double lower = *std::max_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid));
      m = 0.5 * (lower + m);
    }
    out[px] = m;
  }
  return out;
}

TemperatureImage remove_window_artifact(const TemperatureImage& frame, const TemperatureImage& artifact) {
  require_same_shape(frame, artifact, "remove_window_artifact");
  const auto vals = artifact.values();
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(artifact.size());
  TemperatureImage out(frame.width(), frame.height());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = std::max(0.0, frame[i] - artifact[i] + mean);
  return out;
}

QuantileBackground::QuantileBackground(double quantile) : quantile_(quantile) {
  if (!(quantile_ >= 0.0 && quantile_ <= 1.0)) throw usage_error("background.quantile", "quantile must lie in [0, 1]");
}

double QuantileBackground::tropopause_temperature(const TemperatureImage& frame) const {
  if (frame.empty()) throw data_error("background.empty", "empty frame");
  std::vector<double> v(frame.values().begin(), frame.values().end());
  const auto k = static_cast<std::size_t>(std::floor(quantile_ * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

BackgroundResidual background_residual(const TemperatureImage& t_prime, const BackgroundModel& model,
                                       const SiteParams& site) {
  const LinearLapseHeightModel heights(site);
  BackgroundResidual r;
  r.tropopause_temperature = model.tropopause_temperature(t_prime);
  const double h_trop = heights.height_km(r.tropopause_temperature);
  const double t_trop_kelvin = r.tropopause_temperature / 100.0;
  r.delta = TemperatureImage(t_prime.width(), t_prime.height());
  r.height_diff = HeightImage(t_prime.width(), t_prime.height());
  for (std::size_t i = 0; i < t_prime.size(); ++i) {
    r.delta[i] = t_prime[i] - r.tropopause_temperature;
    r.height_diff[i] = std::max(0.0, h_trop - heights.height_km(t_prime[i])) * t_trop_kelvin;
  }
  return r;
}

ByteImage normalize_8bit(const TemperatureImage& delta, const SiteParams& site) {
  ByteImage out(delta.width(), delta.height());
  if (delta.empty()) return out;
  const double lo = *std::min_element(delta.values().begin(), delta.values().end());
  const double feasible = site.feasible_delta_ck();
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double s = std::clamp((delta[i] - lo) / feasible, 0.0, 1.0);
    // Snap to 1e-9 first so ties hidden by decimal round-off (e.g. 4890.2 / 9780.4) round half up.
    out[i] = static_cast<std::uint8_t>(std::lround(std::round(255.0 * s * 1e9) / 1e9));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::kX1: return "X1";
    case FeatureVariant::kX2: return "X2";
    case FeatureVariant::kX3: return "X3";
    case FeatureVariant::kX4: return "X4";
  }
  return "?";
}

std::string to_string(Neighborhood n) {
  switch (n) {
    case Neighborhood::kSingle: return "single";
    case Neighborhood::kFirstOrder: return "first";
    case Neighborhood::kSecondOrder: return "second";
  }
  return "?";
}

FeatureVariant parse_variant(const std::string& s) {
  if (s == "X1" || s == "x1") return FeatureVariant::kX1;
  if (s == "X2" || s == "x2") return FeatureVariant::kX2;
  if (s == "X3" || s == "x3") return FeatureVariant::kX3;
  if (s == "X4" || s == "x4") return FeatureVariant::kX4;
  throw usage_error("features.variant", "unknown feature variant '" + s + "'");
}

Neighborhood parse_neighborhood(const std::string& s) {
  if (s == "single") return Neighborhood::kSingle;
  if (s == "first") return Neighborhood::kFirstOrder;
  if (s == "second") return Neighborhood::kSecondOrder;
  throw usage_error("features.neighborhood", "unknown neighborhood '" + s + "' (single|first|second)");
}

std::size_t neighborhood_size(Neighborhood n) {
  switch (n) {
    case Neighborhood::kSingle: return 1;
    case Neighborhood::kFirstOrder: return 5;
    case Neighborhood::kSecondOrder: return 9;
  }
  return 1;
}

std::size_t variant_dim(FeatureVariant v) { return v == FeatureVariant::kX4 ? 3 : 2; }

std::string FeatureSpec::label() const {
  std::string s = to_string(variant) + "/" + to_string(neighborhood);
  if (expansion_order > 1) s = "P" + std::to_string(expansion_order) + "(" + s + ")";
  return s;
}

std::vector<FeatureSpec> all_feature_specs(int expansion_order, double bias) {
  std::vector<FeatureSpec> out;
  for (auto v : {FeatureVariant::kX1, FeatureVariant::kX2, FeatureVariant::kX3, FeatureVariant::kX4}) {
    for (auto n : {Neighborhood::kSingle, Neighborhood::kFirstOrder, Neighborhood::kSecondOrder}) {
      out.push_back(FeatureSpec{v, n, expansion_order, bias});
    }
  }
  return out;
}

namespace {

template <class T>
void shape_from(const std::optional<Grid<T>>& g, std::size_t& w, std::size_t& h) {
  if (g && w == 0) {
    w = g->width();
    h = g->height();
  }
}

struct Plane {
  std::string name;
  const Grid<double>* real = nullptr;
  const ByteImage* bytes = nullptr;

  double at(std::ptrdiff_t r, std::ptrdiff_t c) const {
    return real ? real->clamped(r, c) : static_cast<double>(bytes->clamped(r, c));
  }
};

template <class T>
const T& need(const std::optional<T>& field, const char* name, FeatureVariant v) {
  if (!field) {
    throw data_error("features.missing_field",
                     std::string("feature variant ") + to_string(v) + " needs field " + name);
  }
  return *field;
}

// Neighbor offsets (row, col) in the order they are appended to a row.
constexpr std::array<std::pair<int, int>, 8> kNeighborOffsets{{
    {-1, 0}, {0, -1}, {0, 1}, {1, 0},     // 1st order
    {-1, -1}, {-1, 1}, {1, -1}, {1, 1},   // diagonals, 2nd order
}};

}  // namespace

std::size_t FrameBundle::width() const {
  std::size_t w = 0, h = 0;
  shape_from(t, w, h);
  shape_from(t_prime, w, h);
  shape_from(delta_t, w, h);
  shape_from(intensity, w, h);
  shape_from(velocity_magnitude, w, h);
  return w;
}

std::size_t FrameBundle::height() const {
  std::size_t w = 0, h = 0;
  shape_from(t, w, h);
  shape_from(t_prime, w, h);
  shape_from(delta_t, w, h);
  shape_from(intensity, w, h);
  shape_from(velocity_magnitude, w, h);
  return h;
}

FeatureMatrix assemble(const FrameBundle& bundle, const FeatureSpec& spec) {
  std::vector<Plane> planes;
  switch (spec.variant) {
    case FeatureVariant::kX1:
      planes = {{"T", &need(bundle.t, "T", spec.variant)}, {"H", &need(bundle.h, "H", spec.variant)}};
      break;
    case FeatureVariant::kX2:
      planes = {{"T'", &need(bundle.t_prime, "T'", spec.variant)},
                {"H'", &need(bundle.h_prime, "H'", spec.variant)}};
      break;
    case FeatureVariant::kX3:
      planes = {{"dT", &need(bundle.delta_t, "dT", spec.variant)},
                {"H''", &need(bundle.h_second, "H''", spec.variant)}};
      break;
    case FeatureVariant::kX4:
      planes = {{"|v|", &need(bundle.velocity_magnitude, "|v|", spec.variant)},
                {"I", nullptr, &need(bundle.intensity, "I", spec.variant)},
                {"dT", &need(bundle.delta_t, "dT", spec.variant)}};
      break;
  }
  const std::size_t w = planes.front().real ? planes.front().real->width() : planes.front().bytes->width();
  const std::size_t h = planes.front().real ? planes.front().real->height() : planes.front().bytes->height();
  for (const auto& p : planes) {
    const std::size_t pw = p.real ? p.real->width() : p.bytes->width();
    const std::size_t ph = p.real ? p.real->height() : p.bytes->height();
    if (pw != w || ph != h) throw data_error("features.shape", "feature planes differ in shape");
  }

  const std::size_t n_offsets = neighborhood_size(spec.neighborhood) - 1;
  FeatureMatrix fm;
  fm.width = w;
  fm.height = h;
  for (const auto& p : planes) fm.columns.push_back(p.name);
  for (std::size_t k = 0; k < n_offsets; ++k) {
    const auto [dr, dc] = kNeighborOffsets[k];
    for (const auto& p : planes) {
      fm.columns.push_back(p.name + "@(" + std::to_string(dr) + "," + std::to_string(dc) + ")");
    }
  }
  fm.values.resize(static_cast<Eigen::Index>(w * h), static_cast<Eigen::Index>(fm.columns.size()));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const auto row = static_cast<Eigen::Index>(r * w + c);
      Eigen::Index col = 0;
      const auto ri = static_cast<std::ptrdiff_t>(r);
      const auto ci = static_cast<std::ptrdiff_t>(c);
      for (const auto& p : planes) fm.values(row, col++) = p.at(ri, ci);
      for (std::size_t k = 0; k < n_offsets; ++k) {
        const auto [dr, dc] = kNeighborOffsets[k];
        for (const auto& p : planes) fm.values(row, col++) = p.at(ri + dr, ci + dc);
      }
    }
  }
  return fm;
}

Eigen::MatrixXd stack_rows(const std::vector<const FeatureMatrix*>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = parts.empty() ? 0 : parts.front()->cols();
  for (const auto* p : parts) {
    if (p->cols() != cols) throw data_error("features.stack", "cannot stack matrices with different widths");
    rows += p->rows();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.middleRows(at, p->rows()) = p->values;
    at += p->rows();
  }
  return out;
}

}  // namespace irseg
