#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "fusionsam/tensor.hpp"

namespace fusionsam {

struct GradReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;  // flat index across all checked tensors, in order
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor), so entries whose true
  // gradient is ~0 are judged on absolute error.
  double floor = 1e-3;
  // 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Compares backward() against central differences
/// (f(x + eps e) - f(x - eps e)) / (2 eps) for every listed leaf tensor.
/// `f` must rebuild its graph from the current leaf values on each call and
/// return a one-element tensor.
GradReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt,
                      const GradCheckOptions& options = {});

/// Single-input convenience form.
GradReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace fusionsam
