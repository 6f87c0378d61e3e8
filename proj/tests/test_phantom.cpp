#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "shapeseg/error.hpp"
#include "shapeseg/netpbm.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/rng.hpp"

using namespace shapeseg;
namespace fs = std::filesystem;

namespace {

double distance_to_trace(const CurveTrace& t, Point2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < t.polyline.size(); ++i)
    best = std::min(best, point_segment_distance(p, t.polyline[i], t.polyline[i + 1]));
  return best;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("samples are a function of seed and index") {
  PhantomConfig cfg;
  Sample a = gen_sample(cfg, 17), b = gen_sample(cfg, 17);
  CHECK(std::vector<double>(a.image.data().begin(), a.image.data().end()) ==
        std::vector<double>(b.image.data().begin(), b.image.data().end()));
  CHECK(a.label == b.label);
  Sample c = gen_sample(cfg, 18);
  CHECK_FALSE(a.label == c.label);
}

TEST_CASE("image values stay in the unit interval") {
  Sample s = gen_sample(PhantomConfig{}, 3);
  CHECK(s.image.shape() == Shape{1, 64, 64});
  for (double v : s.image.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("no curves gives an all-background label") {
  PhantomConfig cfg;
  cfg.catheter_min = cfg.catheter_max = 0;
  cfg.guidewire_min = cfg.guidewire_max = 0;
  Sample s = gen_sample(cfg, 0);
  CHECK(foreground_fraction(s.label) == 0.0);
  CHECK(s.curves.empty());
}

TEST_CASE("mean foreground fraction lies in the sparse band") {
  PhantomConfig cfg;
  double total = 0;
  for (std::size_t i = 0; i < 100; ++i) total += foreground_fraction(gen_sample(cfg, i).label);
  const double mean = total / 100;
  CHECK(mean > 0.005);
  CHECK(mean < 0.15);
}

TEST_CASE("both instrument classes appear") {
  Sample s = gen_sample(PhantomConfig{}, 5);
  std::set<std::uint8_t> seen(s.label.classes.begin(), s.label.classes.end());
  CHECK(seen == std::set<std::uint8_t>{0, 1, 2});
}

TEST_CASE("labels follow the traced curves") {
  PhantomConfig cfg;
  for (std::size_t idx = 0; idx < 10; ++idx) {
    Sample s = gen_sample(cfg, idx);
    const std::size_t n = cfg.image_size;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const std::uint8_t cls = s.label.at(r, c);
        const Point2 p{static_cast<double>(c), static_cast<double>(r)};
        if (cls != 0) {
          double best = std::numeric_limits<double>::infinity();
          double width = 0;
          for (const CurveTrace& t : s.curves)
            if (t.cls == cls && distance_to_trace(t, p) < best) {
              best = distance_to_trace(t, p);
              width = t.width;
            }
          REQUIRE(best <= width / 2 + 0.75);
        } else {
          for (const CurveTrace& t : s.curves) REQUIRE(distance_to_trace(t, p) > t.width / 2 - 0.75);
        }
      }
  }
}

TEST_CASE("split sizes follow the floor rule") {
  auto [tr, te] = split_dataset(100, 0.7, 9);
  CHECK(tr.size() == 70);
  CHECK(te.size() == 30);
  auto [tr2, te2] = split_dataset(10, 0.7, 9);
  CHECK(tr2.size() == 7);
  CHECK(te2.size() == 3);
}

TEST_CASE("split is a partition") {
  auto [tr, te] = split_dataset(57, 0.7, 4);
  std::set<std::size_t> all(tr.begin(), tr.end());
  for (auto i : te) CHECK(all.insert(i).second);
  CHECK(all.size() == 57);
  CHECK(*all.rbegin() == 56);
}

TEST_CASE("split fraction must be in (0,1)") {
  CHECK_THROWS_AS(split_dataset(10, 1.5, 1), InvalidFraction);
  CHECK_THROWS_AS(split_dataset(10, -0.1, 1), InvalidFraction);
}

TEST_CASE("point to segment distance") {
  CHECK(point_segment_distance({0, 1}, {-1, 0}, {1, 0}) == 1.0);
  CHECK(point_segment_distance({3, 4}, {0, 0}, {0, 0}) == 5.0);
  CHECK(point_segment_distance({2, 0}, {-1, 0}, {1, 0}) == 1.0);
}

}  // TEST_SUITE

TEST_SUITE("netpbm") {

TEST_CASE("pgm header and size") {
  fs::path p = fs::temp_directory_path() / "shapeseg_test_header.pgm";
  GrayImage img{64, 64, std::vector<std::uint8_t>(64 * 64, 7)};
  write_pgm(p, img);
  const std::string bytes = file_bytes(p);
  const std::string header = "P5\n64 64\n255\n";
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(bytes.size() == header.size() + 4096);
}

TEST_CASE("random images round-trip byte for byte") {
  SplitMix64 rng(12);
  GrayImage g{13, 7, {}};
  for (std::size_t i = 0; i < 13 * 7; ++i) g.pixels.push_back(static_cast<std::uint8_t>(rng.below(256)));
  fs::path pg = fs::temp_directory_path() / "shapeseg_test_rt.pgm";
  write_pgm(pg, g);
  CHECK(read_pgm(pg) == g);
  const std::string first = file_bytes(pg);
  write_pgm(pg, read_pgm(pg));
  CHECK(file_bytes(pg) == first);

  RgbImage c{5, 3, {}};
  for (std::size_t i = 0; i < 5 * 3 * 3; ++i) c.rgb.push_back(static_cast<std::uint8_t>(rng.below(256)));
  fs::path pp = fs::temp_directory_path() / "shapeseg_test_rt.ppm";
  write_ppm(pp, c);
  CHECK(read_ppm(pp) == c);
}

TEST_CASE("reader accepts comments and rejects other formats") {
  fs::path p = fs::temp_directory_path() / "shapeseg_test_comment.pgm";
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n# made by hand\n2 1\n255\n" << '\x01' << '\x02';
  }
  GrayImage g = read_pgm(p);
  CHECK(g.width == 2);
  CHECK(g.pixels == std::vector<std::uint8_t>{1, 2});
  {
    std::ofstream out(p, std::ios::binary);
    out << "P2\n2 1\n255\n1 2\n";
  }
  CHECK_THROWS_AS(read_pgm(p), FormatError);
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n2 2\n255\n" << '\x01';
  }
  CHECK_THROWS_AS(read_pgm(p), FormatError);
  CHECK_THROWS_AS(read_pgm(fs::temp_directory_path() / "shapeseg_no_such_file.pgm"), IoError);
}

TEST_CASE("quantisation") {
  std::vector<double> v{0.0, 1.0, 0.5, -2.0, 3.0};
  GrayImage g = quantize(v, 5, 1);
  CHECK(g.pixels == std::vector<std::uint8_t>{0, 255, 128, 0, 255});
  CHECK(dequantize(g)[1] == 1.0);
}

TEST_CASE("label images store class indices") {
  LabelMap m(2, 2);
  m.classes = {0, 1, 2, 1};
  CHECK(label_image(m).pixels == m.classes);
  CHECK(label_from_image(label_image(m)) == m);
}

TEST_CASE("overlay paints catheter red and guidewire green") {
  GrayImage base{3, 1, {10, 20, 30}};
  LabelMap m(1, 3);
  m.classes = {0, 1, 2};
  RgbImage o = overlay(base, m);
  CHECK(o.rgb == std::vector<std::uint8_t>{10, 10, 10, 255, 0, 0, 0, 255, 0});
}

}  // TEST_SUITE
