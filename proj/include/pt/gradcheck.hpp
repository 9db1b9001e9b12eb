#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pt/tensor.hpp"

namespace pt {

struct GradCheckEntry {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double relative_error = 0;
};

struct GradCheckReport {
  double max_relative_error = 0;
  double tolerance = 0;
  std::size_t coordinates = 0;
  /// Coordinates whose relative error exceeded the tolerance.
  std::vector<GradCheckEntry> failures;
  GradCheckEntry worst;

  bool passed() const { return failures.empty(); }
  std::string summary() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
  /// Keeps coordinates whose true gradient is ~0 from reporting noise.
  double floor = 1e-6;
  /// Check at most this many coordinates per input (evenly strided); 0 = all.
  std::size_t max_coordinates_per_input = 0;
};

/// Central finite differences against the tape gradient, in 64-bit mode.
/// `f` must rebuild its graph from `inputs` on every call and return a scalar.
GradCheckReport gradient_check(const std::function<Tensor<double>()>& f,
                               std::vector<Tensor<double>> inputs, GradCheckOptions options = {});

}  // namespace pt
