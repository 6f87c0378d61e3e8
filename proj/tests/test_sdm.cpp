#include <cmath>
#include <vector>

#include "doctest.h"
#include "shapeseg/error.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/sdm.hpp"

using namespace shapeseg;

namespace {

BinaryMask row_mask(std::vector<std::uint8_t> bits) {
  BinaryMask m(1, bits.size());
  m.bits = std::move(bits);
  return m;
}

BinaryMask random_mask(SplitMix64& rng, std::size_t rows, std::size_t cols, double density) {
  BinaryMask m(rows, cols);
  for (auto& b : m.bits) b = rng.uniform() < density ? 1 : 0;
  return m;
}

}  // namespace

TEST_SUITE("sdm") {

TEST_CASE("threshold is strict") {
  BinaryMask m = mask_from_probs(Tensor::from({1, 2}, {0.3, 0.6}), 0.5);
  CHECK(m.bits == std::vector<std::uint8_t>{0, 1});
  BinaryMask eq = mask_from_probs(Tensor::full({2, 2}, 0.5), 0.5);
  CHECK(eq.count() == 0);
}

TEST_CASE("hard masks pass through the threshold unchanged") {
  Tensor t = Tensor::from({2, 3}, {1, 0, 0, 1, 1, 0});
  BinaryMask m = mask_from_probs(t, 0.5);
  CHECK(m.bits == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0});
}

TEST_CASE("threshold outside (0,1) is rejected") {
  CHECK_THROWS_AS(mask_from_probs(Tensor::zeros({2, 2}), 1.0), InvalidThreshold);
  CHECK_THROWS_AS(mask_from_probs(Tensor::zeros({2, 2}), 0.0), InvalidThreshold);
}

TEST_CASE("boundary of a 3x3 block excludes the centre") {
  BinaryMask m(3, 3);
  for (auto& b : m.bits) b = 1;
  BoundarySet b = boundary_of(m);
  CHECK(b.size() == 8);
  for (const Pixel& p : b) CHECK_FALSE((p.row == 1 && p.col == 1));
}

TEST_CASE("boundary of a single pixel and of an empty mask") {
  BinaryMask m(4, 4);
  m.set(2, 1, true);
  CHECK(boundary_of(m) == BoundarySet{{2, 1}});
  CHECK(boundary_of(BinaryMask(4, 4)).empty());
}

TEST_CASE("edt on a row") {
  Tensor d = edt({{0, 2}}, 1, 5);
  CHECK(std::vector<double>(d.data().begin(), d.data().end()) == std::vector<double>{2, 1, 0, 1, 2});
}

TEST_CASE("edt around a centre pixel") {
  auto sq = edt_squared({{1, 1}}, 3, 3);
  CHECK(sq == std::vector<std::int64_t>{2, 1, 2, 1, 0, 1, 2, 1, 2});
}

TEST_CASE("brute-force edt on 2x2") {
  Tensor d = edt_bruteforce({{0, 0}}, 2, 2);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 1.0);
  CHECK(d[2] == 1.0);
  CHECK(d[3] == std::sqrt(2.0));
}

TEST_CASE("all-pixel boundary gives zero distance") {
  BoundarySet all;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) all.push_back({r, c});
  for (auto v : edt_squared(all, 3, 4)) CHECK(v == 0);
  for (auto v : edt_squared_bruteforce(all, 3, 4)) CHECK(v == 0);
}

TEST_CASE("empty boundary throws") {
  CHECK_THROWS_AS(edt_squared({}, 3, 3), EmptyBoundary);
  CHECK_THROWS_AS(edt_squared_bruteforce({}, 3, 3), EmptyBoundary);
}

TEST_CASE("fast edt equals brute force on random masks") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t rows = 1 + rng.below(40), cols = 1 + rng.below(40);
    BinaryMask m = random_mask(rng, rows, cols, rng.uniform(0.02, 0.6));
    BoundarySet b = boundary_of(m);
    if (b.empty()) continue;
    REQUIRE(edt_squared(b, rows, cols) == edt_squared_bruteforce(b, rows, cols));
    for (const Pixel& p : b) CHECK(edt_squared(b, rows, cols)[p.row * cols + p.col] == 0);
  }
}

TEST_CASE("signed map of a three-pixel run") {
  SdmConfig cfg;
  cfg.normalize = false;
  SignedDistanceMap s = signed_distance(row_mask({0, 1, 1, 1, 0}), cfg);
  CHECK(s.values == std::vector<double>{1, 0, -1, 0, 1});
  CHECK_FALSE(s.normalized);
}

TEST_CASE("signed map of a single pixel") {
  SdmConfig cfg;
  cfg.normalize = false;
  SignedDistanceMap s = signed_distance(row_mask({0, 0, 1, 0, 0}), cfg);
  CHECK(s.values == std::vector<double>{2, 1, 0, 1, 2});
}

TEST_CASE("normalised map divides by the diagonal") {
  SignedDistanceMap s = signed_distance(row_mask({0, 0, 1, 0, 0}), SdmConfig{});
  const double cap = std::sqrt(1.0 + 25.0);
  CHECK(s.cap == cap);
  CHECK(s.values[0] == 2.0 / cap);
  CHECK(s.normalized);
}

TEST_CASE("empty mask uses the degenerate fill") {
  SdmConfig cfg;
  cfg.degenerate_fill = 1.0;
  SignedDistanceMap s = signed_distance(BinaryMask(4, 5), cfg);
  for (double v : s.values) CHECK(v == 1.0);
}

TEST_CASE("sdm pair of identical inputs") {
  BinaryMask label(6, 6);
  label.set(2, 2, true);
  label.set(2, 3, true);
  label.set(3, 3, true);
  Tensor probs = Tensor::zeros({6, 6});
  for (std::size_t i = 0; i < 36; ++i) probs.mutable_data()[i] = label.bits[i];
  auto [pred, lab] = sdm_pair(probs, label, SdmConfig{});
  CHECK(pred == lab);
  auto [pz, lz] = sdm_pair(Tensor::zeros({6, 6}), BinaryMask(6, 6), SdmConfig{});
  for (double v : pz.values) CHECK(v == 1.0);
  for (double v : lz.values) CHECK(v == 1.0);
}

TEST_CASE("complement prediction differs away from the boundary") {
  BinaryMask label(4, 4);
  for (std::size_t r = 1; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) label.set(r, c, true);
  Tensor probs = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 16; ++i) probs.mutable_data()[i] = label.bits[i] ? 0.0 : 1.0;
  SdmConfig cfg;
  cfg.normalize = false;
  auto [pred, lab] = sdm_pair(probs, label, cfg);
  for (std::size_t i = 0; i < 16; ++i) {
    if (pred.values[i] == 0.0 || lab.values[i] == 0.0) continue;
    CHECK(pred.values[i] != lab.values[i]);
  }
}

}  // TEST_SUITE
