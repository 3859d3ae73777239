#include "irseg/flow.hpp"

#include <cmath>
#include <vector>

namespace irseg {

Grid<double> VelocityField::magnitude() const {
  Grid<double> out(u.width(), u.height());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::hypot(u[i], v[i]);
  return out;
}

VelocityField optical_flow(const ByteImage& prev, const ByteImage& cur, const FlowParams& params) {
  require_same_shape(prev, cur, "optical_flow");
  if (params.window < 3 || params.window % 2 == 0) {
    throw usage_error("flow.window", "flow window must be odd and >= 3");
  }
  if (!(params.weight_sigma > 0)) throw usage_error("flow.sigma", "flow weight sigma must be positive");

  const std::size_t w = cur.width();
  const std::size_t h = cur.height();
  Grid<double> mean(w, h), ix(w, h), iy(w, h), it(w, h);
  for (std::size_t i = 0; i < cur.size(); ++i) {
    mean[i] = 0.5 * (static_cast<double>(prev[i]) + static_cast<double>(cur[i]));
    it[i] = static_cast<double>(cur[i]) - static_cast<double>(prev[i]);
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const auto ri = static_cast<std::ptrdiff_t>(r);
      const auto ci = static_cast<std::ptrdiff_t>(c);
      ix(r, c) = 0.5 * (mean.clamped(ri, ci + 1) - mean.clamped(ri, ci - 1));
      iy(r, c) = 0.5 * (mean.clamped(ri + 1, ci) - mean.clamped(ri - 1, ci));
    }
  }

  // Products needed for the structure tensor and the right-hand side.
  Grid<double> xx(w, h), xy(w, h), yy(w, h), xt(w, h), yt(w, h);
  for (std::size_t i = 0; i < cur.size(); ++i) {
    xx[i] = ix[i] * ix[i];
    xy[i] = ix[i] * iy[i];
    yy[i] = iy[i] * iy[i];
    xt[i] = ix[i] * it[i];
    yt[i] = iy[i] * it[i];
  }

  const int radius = params.window / 2;
  std::vector<double> kernel(static_cast<std::size_t>(params.window));
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] =
        std::exp(-0.5 * k * k / (params.weight_sigma * params.weight_sigma));
  }

  // Separable weighted window sum with edge replication.
  auto window_sum = [&](const Grid<double>& src) {
    Grid<double> tmp(w, h), out(w, h);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double s = 0;
        for (int k = -radius; k <= radius; ++k) {
          s += kernel[static_cast<std::size_t>(k + radius)] *
               src.clamped(static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c) + k);
        }
        tmp(r, c) = s;
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double s = 0;
        for (int k = -radius; k <= radius; ++k) {
          s += kernel[static_cast<std::size_t>(k + radius)] *
               tmp.clamped(static_cast<std::ptrdiff_t>(r) + k, static_cast<std::ptrdiff_t>(c));
        }
        out(r, c) = s;
      }
    }
    return out;
  };

  const auto sxx = window_sum(xx);
  const auto sxy = window_sum(xy);
  const auto syy = window_sum(yy);
  const auto sxt = window_sum(xt);
  const auto syt = window_sum(yt);

  VelocityField field{Grid<double>(w, h), Grid<double>(w, h)};
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const double a = sxx[i] + params.damping;
    const double b = sxy[i];
    const double d = syy[i] + params.damping;
    const double det = a * d - b * b;
    const double bx = -sxt[i];
    const double by = -syt[i];
    field.u[i] = (d * bx - b * by) / det;
    field.v[i] = (a * by - b * bx) / det;
  }
  return field;
}

}  // namespace irseg
