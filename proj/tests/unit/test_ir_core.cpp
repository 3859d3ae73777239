#include <doctest.h>

#include <fstream>
#include <random>

#include "irseg/dataset.hpp"
#include "irseg/pgm.hpp"
#include "test_util.hpp"

using namespace irseg;

namespace {

// Independent P5 writer: header text plus big-endian samples.
std::string p5_bytes(std::size_t w, std::size_t h, unsigned maxval, const std::vector<unsigned>& px) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
  for (unsigned v : px) {
    if (maxval > 255) s.push_back(static_cast<char>(v >> 8));
    s.push_back(static_cast<char>(v & 0xff));
  }
  return s;
}

void write_bytes(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

struct PaperManifest {
  test::TempDir dir{"manifest"};
  std::filesystem::path path;

  explicit PaperManifest(std::size_t n_train = 7, std::size_t n_test = 5) {
    std::string csv = "frame,labels,timestamp,split\n";
    const TemperatureImage frame(80, 60, 28315.0);
    const LabelMask mask(80, 60, std::uint8_t{0});
    for (std::size_t i = 0; i < n_train + n_test; ++i) {
      const auto f = "f" + std::to_string(i) + ".pgm";
      const auto l = "l" + std::to_string(i) + ".pgm";
      write_frame(dir / f, frame);
      write_mask(dir / l, mask);
      csv += f + "," + l + ",2017-0" + std::to_string(1 + i / 3) + "-1" + std::to_string(i % 3) + "T12:00:00," +
             (i < n_train ? "train" : "test") + "\n";
    }
    path = dir / "manifest.csv";
    write_bytes(path, csv);
  }
};

}  // namespace

TEST_CASE("constant 80x60 frame loads with its value") {
  test::TempDir dir("frame");
  const auto bytes = p5_bytes(80, 60, 65535, std::vector<unsigned>(80 * 60, 28315));
  write_bytes(dir / "f.pgm", bytes);
  const auto img = load_frame(dir / "f.pgm");
  CHECK(img.width() == 80);
  CHECK(img.height() == 60);
  for (double v : img.values()) REQUIRE(v == 28315.0);
}

TEST_CASE("canonical frame files round-trip byte-identically") {
  test::TempDir dir("frame");
  std::mt19937 rng(3);
  std::uniform_int_distribution<unsigned> d(0, 65535);
  std::vector<unsigned> px(13 * 7);
  for (auto& v : px) v = d(rng);
  const auto bytes = p5_bytes(13, 7, 65535, px);
  write_bytes(dir / "in.pgm", bytes);
  write_frame(dir / "out.pgm", load_frame(dir / "in.pgm"));
  CHECK(read_file(dir / "out.pgm") == bytes);
}

TEST_CASE("frame round-trip property over random grids") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 40);
  std::uniform_int_distribution<unsigned> val(0, 65535);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = dim(rng), h = dim(rng);
    TemperatureImage img(w, h);
    for (auto& v : img.values()) v = val(rng);
    REQUIRE(decode_frame(encode_frame(img)) == img);
  }
}

TEST_CASE("frame decoding errors are distinct") {
  SUBCASE("8-bit frame") {
    const auto bytes = p5_bytes(4, 4, 255, std::vector<unsigned>(16, 7));
    try {
      decode_frame(bytes);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == "pgm.bit_depth");
      CHECK(std::string(e.what()).find("unsupported bit depth") != std::string::npos);
      CHECK(e.kind() == ErrorKind::kData);
    }
  }
  SUBCASE("malformed header") {
    CHECK(test::error_code_of([] { decode_frame("P2\n4 4\n65535\n"); }) == "pgm.malformed_header");
    CHECK(test::error_code_of([] { decode_frame("P5\nfour 4\n65535\n"); }) == "pgm.malformed_header");
    CHECK(test::error_code_of([] { decode_frame("P5\n0 4\n65535\n"); }) == "pgm.malformed_header");
  }
  SUBCASE("dimension overflow") {
    CHECK(test::error_code_of([] { decode_frame("P5\n99999999999999999999999 4\n65535\n"); }) ==
          "pgm.dimension_overflow");
    CHECK(test::error_code_of([] { decode_frame("P5\n100000 100000\n65535\n"); }) == "pgm.dimension_overflow");
  }
  SUBCASE("truncated payload") {
    auto bytes = p5_bytes(4, 4, 65535, std::vector<unsigned>(16, 7));
    bytes.pop_back();
    CHECK(test::error_code_of([&] { decode_frame(bytes); }) == "pgm.truncated");
  }
}

TEST_CASE("header comments are skipped") {
  const std::string bytes = "P5\n# camera 1\n2 1\n# depth\n65535\n" + std::string("\x01\x02\x03\x04", 4);
  const auto img = decode_frame(bytes);
  CHECK(img[0] == 0x0102);
  CHECK(img[1] == 0x0304);
}

TEST_CASE("masks map 0/255 to 0/1 and reject other values") {
  const auto bytes = p5_bytes(3, 1, 255, {0, 255, 0});
  const auto m = decode_mask(bytes);
  CHECK(m[0] == 0);
  CHECK(m[1] == 1);
  CHECK(m[2] == 0);
  CHECK(encode_mask(m) == bytes);
  CHECK(test::error_code_of([] { decode_mask(p5_bytes(3, 1, 255, {0, 1, 0})); }) == "mask.value");
  CHECK(test::error_code_of([] { decode_mask(p5_bytes(3, 1, 65535, {0, 1, 0})); }) == "pgm.bit_depth");
}

TEST_CASE("probability maps encode [0,1] onto the 16-bit range") {
  ProbabilityMap p(3, 1, std::vector<double>{0.0, 0.5, 1.0});
  const auto back = decode_probability(encode_probability(p));
  CHECK(back[0] == 0.0);
  CHECK(back[1] == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(back[2] == 1.0);
}

TEST_CASE("paper-shaped manifest: split pixel totals") {
  PaperManifest pm;
  const auto m = load_manifest(pm.path);
  CHECK(m.entries.size() == 12);
  CHECK(m.count(Split::kTrain) == 7);
  CHECK(m.count(Split::kTest) == 5);
  const auto px = split_pixel_counts(m);
  CHECK(px.train == 33600);
  CHECK(px.test == 24000);
  CHECK(px.total() == 57600);
}

TEST_CASE("manifest errors") {
  test::TempDir dir("manifest_err");
  write_frame(dir / "a.pgm", TemperatureImage(2, 2, 1.0));
  write_mask(dir / "m.pgm", LabelMask(2, 2, std::uint8_t{0}));
  const std::string header = "frame,labels,timestamp,split\n";

  SUBCASE("empty") {
    CHECK(test::error_code_of([&] { parse_manifest(header, dir.path()); }) == "manifest.empty");
    try {
      parse_manifest(header, dir.path());
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("no entries") != std::string::npos);
    }
  }
  SUBCASE("test dated before train") {
    const auto csv = header + "a.pgm,m.pgm,2017-02-01T12:00:00,train\na.pgm,m.pgm,2017-01-01T12:00:00,test\n";
    CHECK(test::error_code_of([&] { parse_manifest(csv, dir.path()); }) == "manifest.chronology");
  }
  SUBCASE("unsorted within a split") {
    const auto csv = header + "a.pgm,m.pgm,2017-02-01T12:00:00,train\na.pgm,m.pgm,2017-01-01T12:00:00,train\n";
    CHECK(test::error_code_of([&] { parse_manifest(csv, dir.path()); }) == "manifest.chronology");
  }
  SUBCASE("unknown split tag") {
    const auto csv = header + "a.pgm,m.pgm,2017-02-01T12:00:00,validation\n";
    CHECK(test::error_code_of([&] { parse_manifest(csv, dir.path()); }) == "manifest.split");
  }
  SUBCASE("missing file") {
    const auto csv = header + "nope.pgm,m.pgm,2017-02-01T12:00:00,train\n";
    CHECK(test::error_code_of([&] { parse_manifest(csv, dir.path()); }) == "manifest.missing_file");
    CHECK_NOTHROW(parse_manifest(csv, dir.path(), {}, false));
  }
  SUBCASE("bad header and timestamp") {
    CHECK(test::error_code_of([&] { parse_manifest("image,mask\n", dir.path()); }) == "manifest.header");
    const auto csv = header + "a.pgm,m.pgm,yesterday,train\n";
    CHECK(test::error_code_of([&] { parse_manifest(csv, dir.path()); }) == "manifest.timestamp");
  }
  SUBCASE("missing manifest file") {
    CHECK(test::error_kind_of([&] { load_manifest(dir / "none.csv"); }) == ErrorKind::kData);
  }
}

TEST_CASE("manifest format/parse round trip keeps the optional previous column") {
  test::TempDir dir("manifest_rt");
  write_frame(dir / "a.pgm", TemperatureImage(2, 2, 1.0));
  write_frame(dir / "p.pgm", TemperatureImage(2, 2, 1.0));
  write_mask(dir / "m.pgm", LabelMask(2, 2, std::uint8_t{0}));
  const std::string csv =
      "frame,labels,timestamp,split,previous\n"
      "a.pgm,m.pgm,2017-01-01T12:00:00,train,p.pgm\n"
      "a.pgm,m.pgm,2017-01-02T12:00:00Z,test,\n";
  const auto m = parse_manifest(csv, dir.path());
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].previous.has_value());
  CHECK_FALSE(m.entries[1].previous.has_value());
  const auto again = parse_manifest(format_manifest(m, dir.path()), dir.path());
  REQUIRE(again.entries.size() == 2);
  CHECK(again.entries[0].frame == m.entries[0].frame);
  CHECK(again.entries[0].previous == m.entries[0].previous);
  CHECK(again.entries[1].timestamp == m.entries[1].timestamp);
  CHECK(again.entries[1].split == Split::kTest);
}

TEST_CASE("site parameters: paper defaults and validation") {
  const SiteParams s;
  CHECK(s.lapse_rate == 9.8);
  CHECK(s.tropopause_height == 11.5);
  CHECK(s.site_elevation == 1.52);
  CHECK_NOTHROW(s.validate());

  SiteParams bad = s;
  bad.lapse_rate = 0;
  CHECK(test::error_code_of([&] { bad.validate(); }) == "site.lapse_rate");
  bad = s;
  bad.tropopause_height = 1.0;
  CHECK(test::error_code_of([&] { bad.validate(); }) == "site.tropopause");
  bad = s;
  bad.site_elevation = -1;
  CHECK(test::error_code_of([&] { bad.validate(); }) == "site.elevation");
}

TEST_CASE("grid shape checks") {
  CHECK(test::error_code_of([] { TemperatureImage(2, 2, std::vector<double>(3)); }) == "grid.shape");
  const TemperatureImage a(2, 3), b(3, 2);
  CHECK(test::error_code_of([&] { require_same_shape(a, b, "x"); }) == "grid.shape_mismatch");
  TemperatureImage g(3, 2);
  g(1, 2) = 5;
  CHECK(g[1 * 3 + 2] == 5);
  CHECK(g.clamped(9, 9) == 5);
  CHECK(g.clamped(-1, -1) == g(0, 0));
}

TEST_CASE("atomic writes leave no temporary files behind") {
  test::TempDir dir("atomic");
  write_file_atomic(dir / "x.txt", "one");
  write_file_atomic(dir / "x.txt", "two");
  CHECK(read_file(dir / "x.txt") == "two");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++n;
  CHECK(n == 1);
}
