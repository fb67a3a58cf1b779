#pragma once

// Fusion mask prompting: inter-domain cross-attention between the two
// quantized token grids, a complementary fusion unit, and the transposed-conv
// projection to an image-resolution fusion mask.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fusionsam/nn.hpp"
#include "fusionsam/random.hpp"
#include "fusionsam/tensor.hpp"

namespace fusionsam {

struct FmpConfig {
  std::size_t latent_dim = 64;     // dc
  std::size_t key_dim = 0;         // d_k; 0 means latent_dim
  bool feed_forward = false;       // optional FFN ahead of each attention LayerNorm
  bool positional = true;          // add a fixed 2-D encoding to both token grids
  std::size_t scale = 4;           // fusion mask upsampling factor
  std::size_t fusion_channels = 3; // C_f
  std::size_t fusion_hidden = 32;

  std::size_t resolved_key_dim() const { return key_dim == 0 ? latent_dim : key_dim; }
};

/// Receives every attention weight matrix produced during a forward pass.
using AttentionTrace = std::vector<Tensor>;

struct FeedForward {
  Linear fc1;
  Linear fc2;
  static FeedForward init(std::size_t dim, Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// softmax(q k^T / sqrt(d_k)) v. The weight matrix is appended to `trace`.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionTrace* trace);

struct CrossDomainParams {
  Linear q1, k1, v1;  // applied to the first modality's tokens
  Linear q2, k2, v2;  // applied to the second modality's tokens
  LayerNorm norm1, norm2;
  std::optional<FeedForward> ffn1, ffn2;
  Linear fuse;  // 1x1 convolution over the channel concat [z1', z2'] -> dc

  static CrossDomainParams init(const FmpConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct ComplementaryParams {
  Linear q_diff, k_pair, v_pair;  // complementary stream z0
  LayerNorm norm0;
  std::optional<FeedForward> ffn0;
  Linear q_f, k_0, v_0;           // final attention: queries from z_c, keys/values from z0
  LayerNorm norm_f;
  std::optional<FeedForward> ffn_f;

  static ComplementaryParams init(const FmpConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// Ablation stand-in for the attention units: channel concat plus a 1x1 conv.
struct ConcatParams {
  Linear mix;
  static ConcatParams init(const FmpConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FusionHead {
  std::vector<ConvTranspose2d> up;
  static FusionHead init(const FmpConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FusionMask {
  Tensor map;     // [H x W x C_f], values in (0, 1)
  Tensor latent;  // z_f, [h x w x dc]
};

/// Token inputs are [(h*w) x dc]. Returns z_c, [(h*w) x dc].
Tensor cross_domain_fuse(const Tensor& tokens1, const Tensor& tokens2, const CrossDomainParams& params,
                         AttentionTrace* trace = nullptr);
/// Returns z_f, [(h*w) x dc].
Tensor complementary_fuse(const Tensor& tokens1, const Tensor& tokens2, const Tensor& z_c,
                          const ComplementaryParams& params, AttentionTrace* trace = nullptr);
Tensor concat_fuse(const Tensor& tokens1, const Tensor& tokens2, const ConcatParams& params);
/// z_f grid [h x w x dc] -> fusion mask at h*s x w*s.
FusionMask fusion_mask(const Tensor& z_f, const FusionHead& head);

}  // namespace fusionsam
