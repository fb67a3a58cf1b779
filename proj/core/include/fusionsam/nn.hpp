#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fusionsam/ops.hpp"
#include "fusionsam/random.hpp"
#include "fusionsam/tensor.hpp"

namespace fusionsam {

enum class ParamGroup { generator, discriminator, frozen };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::generator;
};
using ParamList = std::vector<NamedParam>;

/// Creates a leaf tensor with entries uniform in [-bound, bound].
Tensor uniform_param(Shape shape, Scalar bound, Rng& rng, bool requires_grad = true);

// y = x W + b for x: [n x in]. Weight stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when built without bias

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  void collect(const std::string& prefix, ParamList& out, ParamGroup group) const;
};

struct Conv2d {
  Tensor weight;  // [out x in x k x k]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv2d init(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, ParamList& out, ParamGroup group) const;
};

struct ConvTranspose2d {
  Tensor weight;  // [in x out x k x k]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static ConvTranspose2d init(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                              Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv_transpose2d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, ParamList& out, ParamGroup group) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  Scalar eps = Scalar(1e-5);

  static LayerNorm init(std::size_t n);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParamList& out, ParamGroup group) const;
};

/// Marks every tensor in `params` as (non-)differentiable leaves.
void set_trainable(ParamList& params, bool on);

/// [H x W x C] -> [1 x C x H x W].
Tensor hwc_to_nchw(const Tensor& x);
/// [1 x C x H x W] -> [H x W x C].
Tensor nchw_to_hwc(const Tensor& x);

/// Fixed 2-D sinusoidal table [(h*w) x dim] over normalized cell centers.
/// Half of the channels encode the row, half the column; dim must be a
/// multiple of 4.
Tensor sinusoidal_grid_encoding(std::size_t h, std::size_t w, std::size_t dim);
/// Same encoding for one point given in normalized [0,1] coordinates.
std::vector<Scalar> sinusoidal_point_encoding(Scalar row, Scalar col, std::size_t dim);

}  // namespace fusionsam
