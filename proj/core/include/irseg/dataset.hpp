#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "irseg/grid.hpp"

namespace irseg {

/// Site-level atmospheric constants. Temperatures in centikelvin, heights in km.
struct SiteParams {
  double lapse_rate = 9.8;            // K/km
  double tropopause_height = 11.5;    // km
  double site_elevation = 1.52;       // km
  double surface_temperature = 29315; // centikelvin

  /// Lapse rate expressed in centikelvin per km.
  double lapse_ck_per_km() const { return lapse_rate * 100.0; }
  /// Largest temperature drop a cloud can exhibit between the site and the tropopause.
  double feasible_delta_ck() const { return lapse_ck_per_km() * (tropopause_height - site_elevation); }

  void validate() const;
};

enum class Split { kTrain, kTest };

std::string to_string(Split s);

/// Calendar timestamp parsed from "YYYY-MM-DDTHH:MM:SS" (a trailing 'Z' is accepted).
struct Timestamp {
  std::array<int, 6> fields{};  // year, month, day, hour, minute, second
  std::string text;

  static Timestamp parse(const std::string& text);
  friend bool operator<(const Timestamp& a, const Timestamp& b) { return a.fields < b.fields; }
  friend bool operator==(const Timestamp& a, const Timestamp& b) { return a.fields == b.fields; }
};

struct ManifestEntry {
  std::filesystem::path frame;
  std::filesystem::path labels;
  Timestamp timestamp;
  Split split = Split::kTrain;
  /// Preceding frame of the same sequence, used for the velocity field.
  std::optional<std::filesystem::path> previous;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  SiteParams site;

  std::vector<ManifestEntry> of_split(Split s) const;
  std::size_t count(Split s) const;
};

struct SplitPixelCounts {
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + test; }
};

/// Reads the CSV manifest. Paths are resolved relative to the manifest's directory.
/// Header: frame,labels,timestamp,split[,previous]
DatasetManifest load_manifest(const std::filesystem::path& path, const SiteParams& site = {});
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               const SiteParams& site = {}, bool check_files = true);
/// Inverse of parse_manifest; paths are written relative to `base_dir` when possible.
std::string format_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir);

/// Pixel totals per split, read from the frame headers.
SplitPixelCounts split_pixel_counts(const DatasetManifest& manifest);

}  // namespace irseg
