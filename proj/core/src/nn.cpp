#include "fusionsam/nn.hpp"

#include <cmath>
#include <numbers>

#include "fusionsam/error.hpp"

namespace fusionsam {

Tensor uniform_param(Shape shape, Scalar bound, Rng& rng, bool requires_grad) {
  std::vector<Scalar> v(shape_numel(shape));
  for (Scalar& x : v) x = static_cast<Scalar>(rng.uniform(-bound, bound));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = uniform_param({in, out}, Scalar(1) / std::sqrt(static_cast<Scalar>(in)), rng);
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out, ParamGroup group) const {
  out.push_back({prefix + ".weight", weight, group});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, group});
}

Conv2d Conv2d::init(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, Rng& rng) {
  Conv2d c;
  c.weight = uniform_param({out, in, k, k}, Scalar(1) / std::sqrt(static_cast<Scalar>(in * k * k)), rng);
  c.bias = Tensor::zeros({out}, true);
  c.stride = stride;
  c.pad = pad;
  return c;
}

void Conv2d::collect(const std::string& prefix, ParamList& out, ParamGroup group) const {
  out.push_back({prefix + ".weight", weight, group});
  out.push_back({prefix + ".bias", bias, group});
}

ConvTranspose2d ConvTranspose2d::init(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                                      std::size_t pad, Rng& rng) {
  ConvTranspose2d c;
  // Each output pixel receives in * (k / stride)^2 contributions.
  const std::size_t taps = std::max<std::size_t>(1, k / stride);
  c.weight = uniform_param({in, out, k, k}, Scalar(1) / std::sqrt(static_cast<Scalar>(in * taps * taps)), rng);
  c.bias = Tensor::zeros({out}, true);
  c.stride = stride;
  c.pad = pad;
  return c;
}

void ConvTranspose2d::collect(const std::string& prefix, ParamList& out, ParamGroup group) const {
  out.push_back({prefix + ".weight", weight, group});
  out.push_back({prefix + ".bias", bias, group});
}

LayerNorm LayerNorm::init(std::size_t n) {
  LayerNorm ln;
  ln.gamma = Tensor::full({n}, Scalar(1), true);
  ln.beta = Tensor::zeros({n}, true);
  return ln;
}

void LayerNorm::collect(const std::string& prefix, ParamList& out, ParamGroup group) const {
  out.push_back({prefix + ".gamma", gamma, group});
  out.push_back({prefix + ".beta", beta, group});
}

void set_trainable(ParamList& params, bool on) {
  for (NamedParam& p : params) p.tensor.set_requires_grad(on);
}

Tensor hwc_to_nchw(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("hwc_to_nchw: expected HxWxC, got " + shape_str(x.shape()));
  Tensor chw = permute(x, {2, 0, 1});
  return reshape(chw, {1, x.dim(2), x.dim(0), x.dim(1)});
}

Tensor nchw_to_hwc(const Tensor& x) {
  if (x.rank() != 4 || x.dim(0) != 1) throw DimensionError("nchw_to_hwc: expected 1xCxHxW, got " + shape_str(x.shape()));
  Tensor chw = reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
  return permute(chw, {1, 2, 0});
}

std::vector<Scalar> sinusoidal_point_encoding(Scalar row, Scalar col, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) throw ConfigError("sinusoidal encoding width must be a positive multiple of 4");
  const std::size_t quarter = dim / 4;
  std::vector<Scalar> out(dim);
  for (std::size_t f = 0; f < quarter; ++f) {
    // Frequencies double per band, starting at one period over the image.
    const Scalar freq = Scalar(std::numbers::pi) * std::pow(Scalar(2), static_cast<Scalar>(f));
    out[f] = std::sin(freq * row);
    out[quarter + f] = std::cos(freq * row);
    out[2 * quarter + f] = std::sin(freq * col);
    out[3 * quarter + f] = std::cos(freq * col);
  }
  return out;
}

Tensor sinusoidal_grid_encoding(std::size_t h, std::size_t w, std::size_t dim) {
  std::vector<Scalar> table;
  table.reserve(h * w * dim);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto e = sinusoidal_point_encoding((static_cast<Scalar>(i) + Scalar(0.5)) / static_cast<Scalar>(h),
                                               (static_cast<Scalar>(j) + Scalar(0.5)) / static_cast<Scalar>(w), dim);
      table.insert(table.end(), e.begin(), e.end());
    }
  }
  return Tensor::from({h * w, dim}, std::move(table));
}

}  // namespace fusionsam
