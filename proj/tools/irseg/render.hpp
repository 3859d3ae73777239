#pragma once

#include <string>

#include "irseg/grid.hpp"

namespace irseg::cli {

/// 8-bit RGB PNG: the frame min-max scaled to gray, cloud pixels tinted red.
std::string render_overlay_png(const TemperatureImage& frame, const LabelMask& mask);

}  // namespace irseg::cli
