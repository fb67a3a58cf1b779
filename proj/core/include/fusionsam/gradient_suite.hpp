#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fusionsam/grad_check.hpp"

namespace fusionsam {

struct GradCaseResult {
  std::string name;
  GradReport report;
  double tolerance = 1e-4;
  bool passed = false;
};

/// Finite-difference check of every differentiable op and each composite
/// block (LSTG encoder/decoder and loss, FMP, image encoder, prompt encoder,
/// mask decoder). Quantization, stop-gradient and the straight-through
/// estimator are excluded: their backward rules are deliberately not the
/// derivative of their forward value.
std::vector<GradCaseResult> run_gradient_suite(double tolerance = 1e-4, std::size_t max_coords_per_tensor = 24);

}  // namespace fusionsam
