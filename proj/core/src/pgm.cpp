#include "irseg/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace irseg {
namespace {

// Largest raster accepted; guards width * height * bytes against overflow.
constexpr std::size_t kMaxPixels = std::size_t{1} << 28;

class HeaderCursor {
 public:
  explicit HeaderCursor(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      const auto digit = static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::numeric_limits<std::size_t>::max() - digit) / 10) {
        throw data_error("pgm.dimension_overflow", std::string("PGM ") + field + " overflows");
      }
      value = value * 10 + digit;
      ++pos_;
    }
    if (pos_ == start) {
      throw data_error("pgm.malformed_header", std::string("PGM header: expected ") + field);
    }
    return value;
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw data_error("pgm.malformed_header", "PGM header: missing separator before payload");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string make_header(std::size_t w, std::size_t h, unsigned maxval) {
  std::ostringstream os;
  os << "P5\n" << w << ' ' << h << '\n' << maxval << '\n';
  return os.str();
}

std::string_view payload(std::string_view bytes, const PgmHeader& hdr, std::size_t bytes_per_px) {
  const std::size_t need = hdr.width * hdr.height * bytes_per_px;
  if (bytes.size() < hdr.payload_offset + need) {
    throw data_error("pgm.truncated", "PGM payload truncated: expected " + std::to_string(need) + " bytes");
  }
  return bytes.substr(hdr.payload_offset, need);
}

}  // namespace

PgmHeader parse_pgm_header(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw data_error("pgm.malformed_header", "not a binary PGM (missing P5 magic)");
  }
  HeaderCursor cur(bytes);
  cur.advance(2);
  PgmHeader hdr;
  hdr.width = cur.read_uint("width");
  hdr.height = cur.read_uint("height");
  const std::size_t maxval = cur.read_uint("maxval");
  cur.expect_single_whitespace();
  if (hdr.width == 0 || hdr.height == 0) {
    throw data_error("pgm.malformed_header", "PGM dimensions must be positive");
  }
  if (hdr.width > kMaxPixels || hdr.height > kMaxPixels || hdr.width * hdr.height > kMaxPixels) {
    throw data_error("pgm.dimension_overflow", "PGM dimensions exceed supported size");
  }
  if (maxval == 0 || maxval > 65535) {
    throw data_error("pgm.malformed_header", "PGM maxval out of range");
  }
  hdr.maxval = static_cast<unsigned>(maxval);
  hdr.payload_offset = cur.pos();
  return hdr;
}

PgmHeader read_pgm_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("io.open", "cannot open " + path.string());
  std::string head(512, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_pgm_header(head);
}

TemperatureImage decode_frame(std::string_view bytes) {
  const PgmHeader hdr = parse_pgm_header(bytes);
  if (hdr.maxval != 65535) {
    throw data_error("pgm.bit_depth", "unsupported bit depth: frames must be 16-bit (maxval 65535)");
  }
  const auto raw = payload(bytes, hdr, 2);
  std::vector<double> data(hdr.width * hdr.height);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto hi = static_cast<unsigned char>(raw[2 * i]);
    const auto lo = static_cast<unsigned char>(raw[2 * i + 1]);
    data[i] = static_cast<double>((hi << 8) | lo);
  }
  return TemperatureImage(hdr.width, hdr.height, std::move(data));
}

TemperatureImage load_frame(const std::filesystem::path& path) { return decode_frame(read_file(path)); }

std::string encode_frame(const TemperatureImage& frame) {
  std::string out = make_header(frame.width(), frame.height(), 65535);
  out.reserve(out.size() + 2 * frame.size());
  for (double v : frame.values()) {
    const double r = std::clamp(std::round(v), 0.0, 65535.0);
    const auto u = static_cast<unsigned>(r);
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>(u & 0xff));
  }
  return out;
}

void write_frame(const std::filesystem::path& path, const TemperatureImage& frame) {
  write_file_atomic(path, encode_frame(frame));
}

LabelMask decode_mask(std::string_view bytes) {
  const PgmHeader hdr = parse_pgm_header(bytes);
  if (hdr.maxval != 255) {
    throw data_error("pgm.bit_depth", "unsupported bit depth: masks must be 8-bit (maxval 255)");
  }
  const auto raw = payload(bytes, hdr, 1);
  std::vector<std::uint8_t> data(hdr.width * hdr.height);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto v = static_cast<unsigned char>(raw[i]);
    if (v != 0 && v != 255) {
      throw data_error("mask.value", "label mask values must be 0 or 255");
    }
    data[i] = v == 255 ? 1 : 0;
  }
  return LabelMask(hdr.width, hdr.height, std::move(data));
}

LabelMask load_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

std::string encode_mask(const LabelMask& mask) {
  std::string out = make_header(mask.width(), mask.height(), 255);
  for (auto v : mask.values()) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  write_file_atomic(path, encode_mask(mask));
}

std::string encode_gray8(const ByteImage& image) {
  std::string out = make_header(image.width(), image.height(), 255);
  for (auto v : image.values()) out.push_back(static_cast<char>(v));
  return out;
}

std::string encode_probability(const ProbabilityMap& map) {
  TemperatureImage scaled(map.width(), map.height());
  for (std::size_t i = 0; i < map.size(); ++i) scaled[i] = std::clamp(map[i], 0.0, 1.0) * 65535.0;
  return encode_frame(scaled);
}

ProbabilityMap decode_probability(std::string_view bytes) {
  TemperatureImage raw = decode_frame(bytes);
  ProbabilityMap out(raw.width(), raw.height());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / 65535.0;
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("io.open", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("io.write", "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw data_error("io.write", "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace irseg
