#include "irseg/dataset.hpp"

#include <cstdio>
#include <sstream>

#include "irseg/pgm.hpp"

namespace irseg {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_or_absolute(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (base.empty()) return p.generic_string();
  auto rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

void SiteParams::validate() const {
  if (!(lapse_rate > 0)) throw usage_error("site.lapse_rate", "lapse_rate must be > 0");
  if (!(site_elevation >= 0)) throw usage_error("site.elevation", "site_elevation must be >= 0");
  if (!(tropopause_height > site_elevation)) {
    throw usage_error("site.tropopause", "tropopause_height must exceed site_elevation");
  }
  if (!(surface_temperature >= 0)) throw usage_error("site.surface", "surface_temperature must be >= 0");
}

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Timestamp Timestamp::parse(const std::string& text) {
  Timestamp ts;
  ts.text = text;
  auto& f = ts.fields;
  char tail = '\0';
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &f[0], &f[1], &f[2], &f[3], &f[4], &f[5], &tail);
  const bool ok = (n == 6 || (n == 7 && tail == 'Z')) && f[1] >= 1 && f[1] <= 12 && f[2] >= 1 && f[2] <= 31 &&
                  f[3] >= 0 && f[3] <= 23 && f[4] >= 0 && f[4] <= 59 && f[5] >= 0 && f[5] <= 60;
  if (!ok) throw data_error("manifest.timestamp", "bad timestamp '" + text + "' (want YYYY-MM-DDTHH:MM:SS)");
  return ts;
}

std::vector<ManifestEntry> DatasetManifest::of_split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

std::size_t DatasetManifest::count(Split s) const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.split == s ? 1 : 0;
  return n;
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               const SiteParams& site, bool check_files) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool has_previous = false;
  DatasetManifest m;
  m.site = site;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      const std::vector<std::string> base{"frame", "labels", "timestamp", "split"};
      auto with_prev = base;
      with_prev.push_back("previous");
      if (fields == base) {
        has_previous = false;
      } else if (fields == with_prev) {
        has_previous = true;
      } else {
        throw data_error("manifest.header", "manifest header must be frame,labels,timestamp,split[,previous]");
      }
      have_header = true;
      continue;
    }
    const std::size_t want = has_previous ? 5 : 4;
    if (fields.size() != want) {
      throw data_error("manifest.columns", "manifest line " + std::to_string(lineno) + ": expected " +
                                               std::to_string(want) + " columns");
    }
    ManifestEntry e;
    e.frame = resolve(base_dir, fields[0]);
    e.labels = resolve(base_dir, fields[1]);
    e.timestamp = Timestamp::parse(fields[2]);
    if (fields[3] == "train") {
      e.split = Split::kTrain;
    } else if (fields[3] == "test") {
      e.split = Split::kTest;
    } else {
      throw data_error("manifest.split", "manifest line " + std::to_string(lineno) + ": unknown split tag '" +
                                             fields[3] + "'");
    }
    if (has_previous && !fields[4].empty()) e.previous = resolve(base_dir, fields[4]);
    if (check_files) {
      for (const auto* p : {&e.frame, &e.labels}) {
        if (!std::filesystem::exists(*p)) throw data_error("manifest.missing_file", "missing file " + p->string());
      }
      if (e.previous && !std::filesystem::exists(*e.previous)) {
        throw data_error("manifest.missing_file", "missing file " + e.previous->string());
      }
    }
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw data_error("manifest.empty", "manifest has no entries");

  for (std::size_t i = 1; i < m.entries.size(); ++i) {
    if (m.entries[i].timestamp < m.entries[i - 1].timestamp) {
      throw data_error("manifest.chronology", "manifest entries are not in chronological order at " +
                                                  m.entries[i].timestamp.text);
    }
  }
  bool seen_test = false;
  for (const auto& e : m.entries) {
    if (e.split == Split::kTest) seen_test = true;
    if (e.split == Split::kTrain && seen_test) {
      throw data_error("manifest.chronology", "train entry " + e.timestamp.text + " is dated after a test entry");
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const SiteParams& site) {
  if (!std::filesystem::exists(path)) throw data_error("io.open", "manifest not found: " + path.string());
  return parse_manifest(read_file(path), path.parent_path(), site, true);
}

std::string format_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir) {
  bool any_prev = false;
  for (const auto& e : manifest.entries) any_prev |= e.previous.has_value();
  std::ostringstream os;
  os << "frame,labels,timestamp,split" << (any_prev ? ",previous" : "") << '\n';
  for (const auto& e : manifest.entries) {
    os << relative_or_absolute(e.frame, base_dir) << ',' << relative_or_absolute(e.labels, base_dir) << ','
       << e.timestamp.text << ',' << to_string(e.split);
    if (any_prev) os << ',' << (e.previous ? relative_or_absolute(*e.previous, base_dir) : std::string{});
    os << '\n';
  }
  return os.str();
}

SplitPixelCounts split_pixel_counts(const DatasetManifest& manifest) {
  SplitPixelCounts c;
  for (const auto& e : manifest.entries) {
    const auto h = read_pgm_header(e.frame);
    (e.split == Split::kTrain ? c.train : c.test) += h.width * h.height;
  }
  return c;
}

}  // namespace irseg
