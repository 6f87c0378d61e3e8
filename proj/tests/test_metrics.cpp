#include <cmath>
#include <vector>

#include "doctest.h"
#include "shapeseg/metrics.hpp"
#include "shapeseg/rng.hpp"

using namespace shapeseg;

namespace {

LabelMap map2x2(std::vector<std::uint8_t> v) {
  LabelMap m(2, 2);
  m.classes = std::move(v);
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand count on a 2x2 image") {
  ConfusionCounts c = confusion(map2x2({1, 1, 0, 0}), map2x2({1, 0, 0, 0}), 2);
  CHECK(c.per_class[1] == ClassCounts{1, 1, 0, 2});
  MetricsReport r = evaluate(c);
  CHECK(r.dice[1] == 2.0 / 3.0);
  CHECK(r.jaccard[1] == 0.5);
  CHECK(r.accuracy == 0.75);
}

TEST_CASE("perfect prediction") {
  LabelMap m(3, 3);
  m.classes = {0, 1, 2, 0, 1, 2, 0, 0, 0};
  ConfusionCounts c = confusion(m, m, 3);
  for (const ClassCounts& k : c.per_class) {
    CHECK(k.fp == 0);
    CHECK(k.fn == 0);
  }
  MetricsReport r = evaluate(c);
  for (double d : r.dice) CHECK(d == 1.0);
  for (double j : r.jaccard) CHECK(j == 1.0);
  CHECK(r.miou == 1.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("empty prediction against empty ground truth") {
  LabelMap empty(4, 4);
  ConfusionCounts c = confusion(empty, empty, 2);
  CHECK(c.per_class[1].tp == 0);
  CHECK(c.per_class[1].tn == 16);
  CHECK(evaluate(c).dice[1] == 1.0);
}

TEST_CASE("jaccard follows from dice") {
  SplitMix64 rng(99);
  for (int t = 0; t < 200; ++t) {
    LabelMap a(8, 8), b(8, 8);
    for (auto& v : a.classes) v = static_cast<std::uint8_t>(rng.below(3));
    for (auto& v : b.classes) v = static_cast<std::uint8_t>(rng.below(3));
    MetricsReport r = evaluate(confusion(a, b, 3));
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::fabs(r.jaccard[k] - r.dice[k] / (2.0 - r.dice[k])) < 1e-12);
  }
}

TEST_CASE("argmax ties go to the lower class") {
  Tensor p = Tensor::from({3, 1, 2}, {0.4, 0.2, 0.4, 0.5, 0.2, 0.3});
  LabelMap m = argmax_classes(p);
  CHECK(m.classes == std::vector<std::uint8_t>{0, 1});
}

TEST_CASE("summary is a macro average") {
  MetricsSummary s;
  MetricsReport a, b;
  a.dice = {1, 0.5};
  a.jaccard = {1, 1.0 / 3.0};
  a.miou = 0.6;
  a.accuracy = 0.9;
  b.dice = {1, 1.0};
  b.jaccard = {1, 1.0};
  b.miou = 1.0;
  b.accuracy = 1.0;
  s.add(a);
  s.add(b);
  MetricsSummary m = s.averaged();
  CHECK(m.images == 2);
  CHECK(m.dice == 0.75);
  CHECK(m.miou == doctest::Approx(0.8));
  CHECK(m.accuracy == doctest::Approx(0.95));
}

}  // TEST_SUITE
