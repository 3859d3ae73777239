#pragma once

#include "irseg/grid.hpp"

namespace irseg {

/// Per-pixel displacement in pixels/frame; u along columns, v along rows.
struct VelocityField {
  Grid<double> u;
  Grid<double> v;

  Grid<double> magnitude() const;
};

struct FlowParams {
  int window = 7;             // odd window side, >= 3
  double weight_sigma = 2.0;  // Gaussian weight, pixels
  double damping = 1e-3;      // Tikhonov term on the structure tensor diagonal
};

/// Dense weighted Lucas-Kanade: per pixel, solves the Gaussian-weighted 2x2 normal
/// equations of the brightness-constancy residual Ix*u + Iy*v + It over the window.
/// Spatial gradients are central differences of the two frames' mean (edge replicated).
VelocityField optical_flow(const ByteImage& prev, const ByteImage& cur, const FlowParams& params = {});

}  // namespace irseg
