#include <algorithm>

#include "fusionsam/error.hpp"
#include "fusionsam/ops.hpp"
#include "fusionsam/parallel.hpp"

namespace fusionsam {

namespace {

using detail::Node;

Node& parent_of(Node& out, std::size_t i) { return *out.parents[i]; }

void check_conv_inputs(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t w_in_axis,
                       std::size_t w_out_axis, const char* op) {
  if (x.rank() != 4) throw DimensionError(std::string(op) + ": input must be BxCxHxW, got " + shape_str(x.shape()));
  if (w.rank() != 4) throw DimensionError(std::string(op) + ": weight must be rank 4, got " + shape_str(w.shape()));
  if (w.dim(w_in_axis) != x.dim(1)) {
    throw DimensionError(std::string(op) + ": channel mismatch between input " + shape_str(x.shape()) +
                         " and weight " + shape_str(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(w_out_axis)) {
    throw DimensionError(std::string(op) + ": bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
}

// Patch-matrix view of a convolution over one image: `rows` = C*kh*kw,
// `cols` = out_h*out_w.
struct Patches {
  std::size_t channels, h, w, kh, kw, stride, pad, out_h, out_w;
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const Scalar* img, const Patches& p, Scalar* col) {
  for (std::size_t c = 0; c < p.channels; ++c) {
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx) {
        Scalar* row = col + ((c * p.kh + ky) * p.kw + kx) * p.cols();
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) - static_cast<std::ptrdiff_t>(p.pad);
          Scalar* dst = row + oy * p.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(p.h)) {
            std::fill(dst, dst + p.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = img + (c * p.h + static_cast<std::size_t>(iy)) * p.w;
          for (std::size_t ox = 0; ox < p.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) - static_cast<std::ptrdiff_t>(p.pad);
            dst[ox] = ix < 0 || ix >= static_cast<std::ptrdiff_t>(p.w) ? Scalar(0) : src[ix];
          }
        }
      }
    }
  }
}

// Adds each patch-matrix entry back onto the image position it came from.
// Parallel over channels; each channel's planes are disjoint.
void col2im_add(const Scalar* col, const Patches& p, Scalar* img) {
  parallel_for(p.channels, 1, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      for (std::size_t ky = 0; ky < p.kh; ++ky) {
        for (std::size_t kx = 0; kx < p.kw; ++kx) {
          const Scalar* row = col + ((c * p.kh + ky) * p.kw + kx) * p.cols();
          for (std::size_t oy = 0; oy < p.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) - static_cast<std::ptrdiff_t>(p.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(p.h)) continue;
            Scalar* dst = img + (c * p.h + static_cast<std::size_t>(iy)) * p.w;
            const Scalar* src = row + oy * p.out_w;
            for (std::size_t ox = 0; ox < p.out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) - static_cast<std::ptrdiff_t>(p.pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(p.w)) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  });
}

// C[m x n] += A[m x k] B[k x n]
void gemm_nn(const Scalar* A, const Scalar* B, Scalar* C, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, 1, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      Scalar* c = C + i * n;
      for (std::size_t r = 0; r < k; ++r) {
        const Scalar a = A[i * k + r];
        const Scalar* b = B + r * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  });
}

// C[m x n] += A[m x k] B[n x k]^T, via a transposed copy of B.
void gemm_nt(const Scalar* A, const Scalar* B, Scalar* C, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<Scalar> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < k; ++r) bt[r * n + j] = B[j * k + r];
  }
  gemm_nn(A, bt.data(), C, m, k, n);
}

// C[m x n] += A[k x m]^T B[k x n]
void gemm_tn(const Scalar* A, const Scalar* B, Scalar* C, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, 1, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      Scalar* c = C + i * n;
      for (std::size_t r = 0; r < k; ++r) {
        const Scalar a = A[r * m + i];
        const Scalar* b = B + r * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  });
}

void add_bias_planes(Scalar* y, const Scalar* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t o = 0; o < channels; ++o) std::fill(y + o * plane, y + (o + 1) * plane, bias[o]);
}

void bias_grad(const Scalar* G, Scalar* db, std::size_t batch, std::size_t channels, std::size_t plane) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < channels; ++o) {
      const Scalar* gp = G + (n * channels + o) * plane;
      Scalar acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
      db[o] += acc;
    }
  }
}

}  // namespace

// Weight [O x C x kh x kw] is an [O x C*kh*kw] matrix against the patch
// matrix of each image.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  check_conv_inputs(x, w, b, 1, 0, "conv2d");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t batch = x.dim(0), out_ch = w.dim(0);
  Patches p{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), stride, pad, 0, 0};
  if (p.kh > p.h + 2 * pad || p.kw > p.w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  p.out_h = (p.h + 2 * pad - p.kh) / stride + 1;
  p.out_w = (p.w + 2 * pad - p.kw) / stride + 1;
  const std::size_t in_plane = p.channels * p.h * p.w, out_plane = out_ch * p.cols();

  std::vector<Scalar> cols(batch * p.rows() * p.cols());
  std::vector<Scalar> out(batch * out_plane);
  for (std::size_t n = 0; n < batch; ++n) {
    Scalar* col = cols.data() + n * p.rows() * p.cols();
    im2col(x.data().data() + n * in_plane, p, col);
    add_bias_planes(out.data() + n * out_plane, b.data().data(), out_ch, p.cols());
    gemm_nn(w.data().data(), col, out.data() + n * out_plane, out_ch, p.rows(), p.cols());
  }

  return Tensor::make_result({batch, out_ch, p.out_h, p.out_w}, std::move(out), {x, w, b},
                             [p, batch, out_ch, in_plane, out_plane, cols = std::move(cols)](Node& o) {
    Node& px = parent_of(o, 0);
    Node& pw = parent_of(o, 1);
    Node& pb = parent_of(o, 2);
    const Scalar* G = o.grad.data();
    if (pb.requires_grad) bias_grad(G, pb.grad.data(), batch, out_ch, p.cols());
    std::vector<Scalar> dcol(px.requires_grad ? p.rows() * p.cols() : 0);
    for (std::size_t n = 0; n < batch; ++n) {
      const Scalar* g = G + n * out_plane;
      if (pw.requires_grad) gemm_nt(g, cols.data() + n * p.rows() * p.cols(), pw.grad.data(), out_ch, p.cols(), p.rows());
      if (px.requires_grad) {
        std::fill(dcol.begin(), dcol.end(), Scalar(0));
        gemm_tn(pw.data.data(), g, dcol.data(), p.rows(), out_ch, p.cols());
        col2im_add(dcol.data(), p, px.grad.data() + n * in_plane);
      }
    }
  });
}

// Adjoint of conv2d: weight [C x O x kh x kw] maps each input pixel to a
// column of the output image's patch matrix.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  check_conv_inputs(x, w, b, 0, 1, "conv_transpose2d");
  if (stride == 0) throw ConfigError("conv_transpose2d: stride must be positive");
  const std::size_t batch = x.dim(0), in_ch = x.dim(1), in_h = x.dim(2), in_w = x.dim(3), out_ch = w.dim(1);
  const std::size_t full_h = (in_h - 1) * stride + w.dim(2);
  const std::size_t full_w = (in_w - 1) * stride + w.dim(3);
  if (full_h <= 2 * pad || full_w <= 2 * pad) throw DimensionError("conv_transpose2d: padding consumes the output");
  const Patches p{out_ch, full_h - 2 * pad, full_w - 2 * pad, w.dim(2), w.dim(3), stride, pad, in_h, in_w};
  const std::size_t in_plane = in_ch * p.cols(), out_plane = out_ch * p.h * p.w;

  std::vector<Scalar> out(batch * out_plane);
  std::vector<Scalar> col(p.rows() * p.cols());
  for (std::size_t n = 0; n < batch; ++n) {
    std::fill(col.begin(), col.end(), Scalar(0));
    gemm_tn(w.data().data(), x.data().data() + n * in_plane, col.data(), p.rows(), in_ch, p.cols());
    add_bias_planes(out.data() + n * out_plane, b.data().data(), out_ch, p.h * p.w);
    col2im_add(col.data(), p, out.data() + n * out_plane);
  }

  return Tensor::make_result({batch, out_ch, p.h, p.w}, std::move(out), {x, w, b},
                             [p, batch, in_ch, out_ch, in_plane, out_plane](Node& o) {
    Node& px = parent_of(o, 0);
    Node& pw = parent_of(o, 1);
    Node& pb = parent_of(o, 2);
    const Scalar* G = o.grad.data();
    if (pb.requires_grad) bias_grad(G, pb.grad.data(), batch, out_ch, p.h * p.w);
    if (!px.requires_grad && !pw.requires_grad) return;
    std::vector<Scalar> gcol(p.rows() * p.cols());
    for (std::size_t n = 0; n < batch; ++n) {
      im2col(G + n * out_plane, p, gcol.data());
      if (pw.requires_grad) gemm_nt(px.data.data() + n * in_plane, gcol.data(), pw.grad.data(), in_ch, p.cols(), p.rows());
      if (px.requires_grad) gemm_nn(pw.data.data(), gcol.data(), px.grad.data() + n * in_plane, in_ch, p.rows(), p.cols());
    }
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
  if (x.rank() != 4) throw DimensionError("avg_pool2d: input must be BxCxHxW, got " + shape_str(x.shape()));
  if (k == 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0) {
    throw DimensionError("avg_pool2d: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(k * k);
  const auto in = x.data();
  std::vector<Scalar> out(planes * oh * ow, Scalar(0));
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) out[(p * oh + y / k) * ow + xx / k] += in[(p * h + y) * w + xx];
    }
  }
  for (Scalar& v : out) v *= inv;
  return Tensor::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, [planes, h, w, k, oh, ow, inv](Node& o) {
    Node& p = parent_of(o, 0);
    if (!p.requires_grad) return;
    for (std::size_t q = 0; q < planes; ++q) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) p.grad[(q * h + y) * w + xx] += inv * o.grad[(q * oh + y / k) * ow + xx / k];
      }
    }
  });
}

}  // namespace fusionsam
