#include "fusionsam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fusionsam/error.hpp"
#include "fusionsam/parallel.hpp"

namespace fusionsam {

namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

Node& parent(Node& out, std::size_t i) { return *out.parents[i]; }

// Unary elementwise op with derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [deriv](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < o.data.size(); ++i) p.grad[i] += o.grad[i] * deriv(p.data[i], o.data[i]);
  });
}

void check_finite(std::span<const Scalar> v, const char* op) {
  for (Scalar s : v) {
    if (!std::isfinite(s)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<Scalar> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(o, k);
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<Scalar> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<Scalar> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& x, Scalar s) {
  return unary(x, [s](Scalar v) { return v * s; }, [s](Scalar, Scalar) { return s; });
}

Tensor add_scalar(const Tensor& x, Scalar s) {
  return unary(x, [s](Scalar v) { return v + s; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: scale must have one element, got " + shape_str(s.shape()));
  const Scalar k = s.item();
  const auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * k;
  return Tensor::make_result(x.shape(), std::move(out), {x, s}, [](Node& o) {
    Node& px = parent(o, 0);
    Node& ps = parent(o, 1);
    const Scalar k = ps.data[0];
    if (px.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i] * k;
    }
    if (ps.requires_grad) {
      Scalar acc = 0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * px.data[i];
      ps.grad[0] += acc;
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  const auto in = x.data();
  const auto b = bias.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + b[i % n];
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [n](Node& o) {
    Node& px = parent(o, 0);
    Node& pb = parent(o, 1);
    if (px.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i % n] += o.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](Scalar v) { return v > 0 ? v : Scalar(0); },
      [](Scalar v, Scalar) { return v > 0 ? Scalar(1) : Scalar(0); });
}

Tensor leaky_relu(const Tensor& x, Scalar slope) {
  return unary(
      x, [slope](Scalar v) { return v > 0 ? v : slope * v; },
      [slope](Scalar v, Scalar) { return v > 0 ? Scalar(1) : slope; });
}

Tensor gelu(const Tensor& x) {
  constexpr Scalar kInvSqrt2 = Scalar(0.70710678118654752440);
  const Scalar kInvSqrt2Pi = Scalar(1.0 / std::sqrt(2.0 * std::numbers::pi));
  return unary(
      x, [](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * kInvSqrt2)); },
      [kInvSqrt2Pi](Scalar v, Scalar) {
        return Scalar(0.5) * (Scalar(1) + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-Scalar(0.5) * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](Scalar v) {
        if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](Scalar v) { return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](Scalar v, Scalar) {
        if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      });
}

Tensor square(const Tensor& x) {
  return unary(x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return 2 * v; });
}

Tensor sum(const Tensor& x) {
  Scalar acc = 0;
  for (Scalar v : x.data()) acc += v;
  return Tensor::make_result({1}, {acc}, {x}, [](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    const Scalar g = o.grad[0];
    for (Scalar& v : p.grad) v += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.numel())); }

Tensor sum_squares(const Tensor& x) {
  Scalar acc = 0;
  for (Scalar v : x.data()) acc += v * v;
  return Tensor::make_result({1}, {acc}, {x}, [](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    const Scalar g = 2 * o.grad[0];
    for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += g * p.data[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<Scalar> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  if (order.size() != r) throw DimensionError("permute: order rank mismatch for " + shape_str(in_shape));
  std::vector<bool> used(r, false);
  for (std::size_t a : order) {
    if (a >= r || used[a]) throw DimensionError("permute: invalid axis order");
    used[a] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[order[i]];
    src_strides[i] = in_strides[order[i]];
  }
  // src_index[j] = flat input index of output element j.
  const std::size_t n = x.numel();
  std::vector<std::size_t> src_index(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t s = 0;
    for (std::size_t a = 0; a < r; ++a) s += idx[a] * src_strides[a];
    src_index[j] = s;
    for (std::size_t a = r; a-- > 0;) {
      if (++idx[a] < out_shape[a]) break;
      idx[a] = 0;
    }
  }
  const auto in = x.data();
  std::vector<Scalar> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = in[src_index[j]];
  return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                             [src_index = std::move(src_index)](Node& o) {
                               Node& p = parent(o, 0);
                               if (!p.requires_grad) return;
                               for (std::size_t j = 0; j < o.grad.size(); ++j) p.grad[src_index[j]] += o.grad[j];
                             });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t a = 0; ok && a < s.size(); ++a) ok = a == axis || s[a] == first[a];
    if (!ok) throw DimensionError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    total += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= first[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < first.size(); ++a) inner *= first[a];

  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<Scalar> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t w = t.dim(axis) * inner;
    const auto in = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in.begin() + o * w, w, out.begin() + o * total * inner + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), parts,
                             [widths, outer, row = total * inner](Node& o) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 Node& p = parent(o, k);
                                 const std::size_t w = widths[k];
                                 if (p.requires_grad) {
                                   for (std::size_t r = 0; r < outer; ++r) {
                                     for (std::size_t i = 0; i < w; ++i) p.grad[r * w + i] += o.grad[r * row + off + i];
                                   }
                                 }
                                 off += w;
                               }
                             });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t row = s[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const auto in = x.data();
  std::vector<Scalar> out(outer * w);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(in.begin() + o * row + begin * inner, w, out.begin() + o * w);
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                             [outer, row, w, off = begin * inner](Node& o) {
                               Node& p = parent(o, 0);
                               if (!p.requires_grad) return;
                               for (std::size_t r = 0; r < outer; ++r) {
                                 for (std::size_t i = 0; i < w; ++i) p.grad[r * row + off + i] += o.grad[r * w + i];
                               }
                             });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_str(table.shape()));
  if (rows.empty()) throw ContractError("gather_rows: empty row list");
  const std::size_t k = table.dim(0);
  const std::size_t d = table.dim(1);
  const auto in = table.data();
  std::vector<Scalar> out(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= k) throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(in.begin() + rows[r] * d, d, out.begin() + r * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), d}, std::move(out), {table}, [idx = std::move(idx), d](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) p.grad[idx[r] * d + j] += o.grad[r * d + j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const Scalar* A = a.data().data();
  const Scalar* B = b.data().data();
  std::vector<Scalar> out(m * n, Scalar(0));
  Scalar* C = out.data();
  parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      Scalar* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const Scalar av = A[i * k + p];
        const Scalar* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
      }
    }
  });
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    Node& pa = parent(o, 0);
    Node& pb = parent(o, 1);
    const Scalar* G = o.grad.data();
    if (pa.requires_grad) {
      // dA[i,:] += sum_j G[i,j] * B^T[j,:], with B transposed once so the
      // inner loop runs over contiguous memory.
      const Scalar* B = pb.data.data();
      std::vector<Scalar> bt(k * n);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      }
      Scalar* dA = pa.grad.data();
      parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
          Scalar* row = dA + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const Scalar g = G[i * n + j];
            const Scalar* b = bt.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) row[p] += g * b[p];
          }
        }
      });
    }
    if (pb.requires_grad) {
      // dB[p,j] += sum_i A[i,p] * G[i,j]
      const Scalar* A = pa.data.data();
      Scalar* dB = pb.grad.data();
      parallel_for(k, 16, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t p = p0; p < p1; ++p) {
          Scalar* row = dB + p * n;
          for (std::size_t i = 0; i < m; ++i) {
            const Scalar av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) row[j] += av * G[i * n + j];
          }
        }
      });
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  check_finite(x.data(), "softmax");
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t len = s[axis];
  const auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      Scalar mx = in[base];
      for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, in[base + t * inner]);
      Scalar z = 0;
      for (std::size_t t = 0; t < len; ++t) {
        const Scalar e = std::exp(in[base + t * inner] - mx);
        out[base + t * inner] = e;
        z += e;
      }
      for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= z;
    }
  }
  return Tensor::make_result(s, std::move(out), {x}, [outer, inner, len](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    for (std::size_t q = 0; q < outer; ++q) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = q * len * inner + i;
        Scalar dot = 0;
        for (std::size_t t = 0; t < len; ++t) dot += o.grad[base + t * inner] * o.data[base + t * inner];
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t j = base + t * inner;
          p.grad[j] += o.data[j] * (o.grad[j] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t n = x.shape().back();
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != n || beta.dim(0) != n) {
    throw DimensionError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const auto in = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<Scalar> out(in.size());
  std::vector<Scalar> xhat(in.size());
  std::vector<Scalar> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* row = in.data() + r * n;
    Scalar mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<Scalar>(n);
    Scalar var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Scalar>(n);
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const Scalar h = (row[j] - mu) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = g[j] * h + b[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
        Node& px = parent(o, 0);
        Node& pg = parent(o, 1);
        Node& pb = parent(o, 2);
        if (pg.requires_grad || pb.requires_grad) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
              const Scalar gr = o.grad[r * n + j];
              if (pg.requires_grad) pg.grad[j] += gr * xhat[r * n + j];
              if (pb.requires_grad) pb.grad[j] += gr;
            }
          }
        }
        if (!px.requires_grad) return;
        const Scalar nn = static_cast<Scalar>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          Scalar sum_d = 0, sum_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const Scalar d = o.grad[r * n + j] * pg.data[j];
            sum_d += d;
            sum_dx += d * xhat[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const Scalar d = o.grad[r * n + j] * pg.data[j];
            px.grad[r * n + j] += inv_std[r] / nn * (nn * d - sum_d - xhat[r * n + j] * sum_dx);
          }
        }
      });
}

Tensor stop_gradient(const Tensor& x) { return x.detach(); }

Tensor straight_through(const Tensor& z, const Tensor& zq) {
  require_same_shape(z, zq, "straight_through");
  std::vector<Scalar> out(zq.data().begin(), zq.data().end());
  return Tensor::make_result(z.shape(), std::move(out), {z}, [](Node& o) {
    Node& p = parent(o, 0);
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() < 2) throw DimensionError("cross_entropy: logits need a class axis plus positions");
  const std::size_t c = logits.dim(0);
  const std::size_t n = logits.numel() / c;
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " positions");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw DataError("cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(c) + ")");
    }
  }
  const auto in = logits.data();
  check_finite(in, "cross_entropy");
  std::vector<Scalar> prob(in.size());
  Scalar total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Scalar mx = in[i];
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, in[k * n + i]);
    Scalar z = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const Scalar e = std::exp(in[k * n + i] - mx);
      prob[k * n + i] = e;
      z += e;
    }
    for (std::size_t k = 0; k < c; ++k) prob[k * n + i] /= z;
    total += std::log(z) + mx - in[static_cast<std::size_t>(labels[i]) * n + i];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor::make_result({1}, {total / static_cast<Scalar>(n)}, {logits},
                             [c, n, prob = std::move(prob), lab = std::move(lab)](Node& o) {
                               Node& p = parent(o, 0);
                               if (!p.requires_grad) return;
                               const Scalar g = o.grad[0] / static_cast<Scalar>(n);
                               for (std::size_t k = 0; k < c; ++k) {
                                 for (std::size_t i = 0; i < n; ++i) {
                                   const Scalar y = static_cast<std::size_t>(lab[i]) == k ? Scalar(1) : Scalar(0);
                                   p.grad[k * n + i] += g * (prob[k * n + i] - y);
                                 }
                               }
                             });
}

}  // namespace fusionsam
