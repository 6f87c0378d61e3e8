#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shapeseg/sdm.hpp"

namespace shapeseg {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

using EdtFn = std::function<std::vector<std::int64_t>(const BoundarySet&, std::size_t, std::size_t)>;

// Fast EDT against the brute-force oracle on `masks` random masks up to
// 64 x 64 plus empty, full and single-pixel masks. Exact integer equality.
CheckResult edt_oracle_check(std::size_t masks, std::uint64_t seed, const EdtFn& edt = edt_squared);

// Central-difference checks on 16 x 16 inputs: every differentiable op and
// loss at 1e-6, the full composite loss (straight-through, perturbations kept
// clear of the threshold) at 1e-4.
std::vector<CheckResult> gradient_checks();

// Tversky(1/2, 1/2) = Dice, Focal(gamma 0) = BCE, Focal-Tversky(gamma 1) =
// Tversky loss, composite with delta = 0 = gamma * base, on random inputs.
std::vector<CheckResult> loss_identity_checks(std::size_t trials, std::uint64_t seed);

// J = D / (2 - D) per class on random label maps, and the 2 x 2 hand count.
std::vector<CheckResult> metric_identity_checks(std::size_t trials, std::uint64_t seed);

struct SelftestOptions {
  EdtFn edt = edt_squared;
  std::size_t edt_masks = 200;
  std::size_t identity_trials = 100;
  std::uint64_t seed = 1;
};

std::vector<CheckResult> run_selftest(const SelftestOptions& opt = {});

// One line per check: "PASS name max_error=... tol=... detail".
std::string format_report(const std::vector<CheckResult>& checks);
bool all_passed(const std::vector<CheckResult>& checks);

}  // namespace shapeseg
