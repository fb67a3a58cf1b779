#include "fusionsam/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionsam/error.hpp"
#include "fusionsam/random.hpp"

namespace fusionsam {

namespace {

Scalar eval_scalar(const std::function<Tensor()>& f) {
  Tensor out = f();
  if (out.numel() != 1) {
    throw ContractError("grad_check: function must return a scalar, got " + shape_str(out.shape()));
  }
  return out.item();
}

}  // namespace

GradReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, const GradCheckOptions& options) {
  if (!(options.eps > 0)) throw ConfigError("grad_check: eps must be positive");

  std::vector<bool> saved_flags;
  for (Tensor& t : wrt) {
    if (!t.defined()) throw ContractError("grad_check: undefined tensor in the wrt list");
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tensor out = f();
    if (out.numel() != 1) {
      throw ContractError("grad_check: function must return a scalar, got " + shape_str(out.shape()));
    }
    out.backward();
  }

  GradReport report;
  Rng rng(options.seed);
  std::size_t base = 0;
  for (Tensor& t : wrt) {
    std::vector<Scalar> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto data = t.mutable_data();
    for (std::size_t i : coords) {
      const Scalar orig = data[i];
      data[i] = orig + static_cast<Scalar>(options.eps);
      const Scalar fp = eval_scalar(f);
      data[i] = orig - static_cast<Scalar>(options.eps);
      const Scalar fm = eval_scalar(f);
      data[i] = orig;
      const double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * options.eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err || report.coords_checked == 0) {
        report.max_rel_err = rel;
        report.worst_index = base + i;
        report.analytic = a;
        report.numeric = numeric;
      }
      ++report.coords_checked;
    }
    base += t.numel();
  }
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    wrt[k].set_requires_grad(saved_flags[k]);
    wrt[k].clear_grad();
  }
  return report;
}

GradReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x.detach();
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check([&] { return f(leaf); }, {leaf}, opts);
}

}  // namespace fusionsam
