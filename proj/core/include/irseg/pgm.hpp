#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "irseg/grid.hpp"

namespace irseg {

struct PgmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::size_t payload_offset = 0;
};

/// Parses the header of a binary (P5) PGM held in `bytes`.
/// Errors carry codes pgm.malformed_header, pgm.dimension_overflow.
PgmHeader parse_pgm_header(std::string_view bytes);
PgmHeader read_pgm_header(const std::filesystem::path& path);

/// 16-bit P5 (maxval 65535, big-endian) frame in centikelvin.
TemperatureImage decode_frame(std::string_view bytes);
TemperatureImage load_frame(const std::filesystem::path& path);
/// Values are rounded to the nearest integer and clamped to [0, 65535].
std::string encode_frame(const TemperatureImage& frame);
void write_frame(const std::filesystem::path& path, const TemperatureImage& frame);

/// 8-bit P5 label mask: 0 -> clear, 255 -> cloud.
LabelMask decode_mask(std::string_view bytes);
LabelMask load_mask(const std::filesystem::path& path);
std::string encode_mask(const LabelMask& mask);
void write_mask(const std::filesystem::path& path, const LabelMask& mask);

/// Plain 8-bit grayscale P5 (no value mapping).
std::string encode_gray8(const ByteImage& image);

/// Probability map as 16-bit PGM, [0, 1] -> [0, 65535].
std::string encode_probability(const ProbabilityMap& map);
ProbabilityMap decode_probability(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace irseg
