#include "fusionsam/fmp.hpp"

#include <bit>
#include <cmath>

#include "fusionsam/error.hpp"

namespace fusionsam {

namespace {

Tensor attention_block(const Tensor& q, const Tensor& k, const Tensor& v, const LayerNorm& norm,
                       const std::optional<FeedForward>& ffn, AttentionTrace* trace) {
  Tensor a = scaled_dot_attention(q, k, v, trace);
  if (ffn) a = (*ffn)(a);
  return norm(a);
}

void check_tokens(const Tensor& t1, const Tensor& t2, const char* op) {
  if (t1.rank() != 2 || t2.rank() != 2 || t1.shape() != t2.shape()) {
    throw DimensionError(std::string(op) + ": token grids differ: " + shape_str(t1.shape()) + " vs " +
                         shape_str(t2.shape()));
  }
}

}  // namespace

FeedForward FeedForward::init(std::size_t dim, Rng& rng) {
  return {Linear::init(dim, 2 * dim, rng), Linear::init(2 * dim, dim, rng)};
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out, ParamGroup::generator);
  fc2.collect(prefix + ".fc2", out, ParamGroup::generator);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionTrace* trace) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: incompatible q/k/v shapes " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                         ", " + shape_str(v.shape()));
  }
  const Scalar inv = Scalar(1) / std::sqrt(static_cast<Scalar>(q.dim(1)));
  Tensor weights = softmax(scale(matmul(q, transpose(k)), inv), 1);
  if (trace != nullptr) trace->push_back(weights);
  return matmul(weights, v);
}

CrossDomainParams CrossDomainParams::init(const FmpConfig& cfg, Rng& rng) {
  const std::size_t dc = cfg.latent_dim, dk = cfg.resolved_key_dim();
  if (dc == 0 || dk == 0) throw ConfigError("FMP widths must be positive");
  CrossDomainParams p{Linear::init(dc, dk, rng, false), Linear::init(dc, dk, rng, false), Linear::init(dc, dk, rng, false),
                      Linear::init(dc, dk, rng, false), Linear::init(dc, dk, rng, false), Linear::init(dc, dk, rng, false),
                      LayerNorm::init(dk), LayerNorm::init(dk), std::nullopt, std::nullopt,
                      Linear::init(2 * dk, dc, rng)};
  if (cfg.feed_forward) {
    p.ffn1 = FeedForward::init(dk, rng);
    p.ffn2 = FeedForward::init(dk, rng);
  }
  return p;
}

void CrossDomainParams::collect(const std::string& prefix, ParamList& out) const {
  q1.collect(prefix + ".q1", out, ParamGroup::generator);
  k1.collect(prefix + ".k1", out, ParamGroup::generator);
  v1.collect(prefix + ".v1", out, ParamGroup::generator);
  q2.collect(prefix + ".q2", out, ParamGroup::generator);
  k2.collect(prefix + ".k2", out, ParamGroup::generator);
  v2.collect(prefix + ".v2", out, ParamGroup::generator);
  norm1.collect(prefix + ".norm1", out, ParamGroup::generator);
  norm2.collect(prefix + ".norm2", out, ParamGroup::generator);
  if (ffn1) ffn1->collect(prefix + ".ffn1", out);
  if (ffn2) ffn2->collect(prefix + ".ffn2", out);
  fuse.collect(prefix + ".fuse", out, ParamGroup::generator);
}

ComplementaryParams ComplementaryParams::init(const FmpConfig& cfg, Rng& rng) {
  const std::size_t dc = cfg.latent_dim, dk = cfg.resolved_key_dim();
  ComplementaryParams p{Linear::init(dc, dk, rng, false), Linear::init(dc, dk, rng, false),
                        Linear::init(dc, dk, rng, false), LayerNorm::init(dk), std::nullopt,
                        Linear::init(dc, dk, rng, false), Linear::init(dk, dk, rng, false),
                        Linear::init(dk, dc, rng, false), LayerNorm::init(dc), std::nullopt};
  if (cfg.feed_forward) {
    p.ffn0 = FeedForward::init(dk, rng);
    p.ffn_f = FeedForward::init(dc, rng);
  }
  return p;
}

void ComplementaryParams::collect(const std::string& prefix, ParamList& out) const {
  q_diff.collect(prefix + ".q_diff", out, ParamGroup::generator);
  k_pair.collect(prefix + ".k_pair", out, ParamGroup::generator);
  v_pair.collect(prefix + ".v_pair", out, ParamGroup::generator);
  norm0.collect(prefix + ".norm0", out, ParamGroup::generator);
  if (ffn0) ffn0->collect(prefix + ".ffn0", out);
  q_f.collect(prefix + ".q_f", out, ParamGroup::generator);
  k_0.collect(prefix + ".k_0", out, ParamGroup::generator);
  v_0.collect(prefix + ".v_0", out, ParamGroup::generator);
  norm_f.collect(prefix + ".norm_f", out, ParamGroup::generator);
  if (ffn_f) ffn_f->collect(prefix + ".ffn_f", out);
}

ConcatParams ConcatParams::init(const FmpConfig& cfg, Rng& rng) {
  return {Linear::init(2 * cfg.latent_dim, cfg.latent_dim, rng)};
}

void ConcatParams::collect(const std::string& prefix, ParamList& out) const {
  mix.collect(prefix + ".mix", out, ParamGroup::generator);
}

FusionHead FusionHead::init(const FmpConfig& cfg, Rng& rng) {
  if (cfg.scale < 2 || !std::has_single_bit(cfg.scale)) throw ConfigError("fusion mask scale must be a power of two >= 2");
  if (cfg.fusion_channels == 0) throw ConfigError("fusion mask needs at least one channel");
  FusionHead h;
  const std::size_t stages = static_cast<std::size_t>(std::countr_zero(cfg.scale));
  std::size_t in = cfg.latent_dim;
  for (std::size_t s = 0; s < stages; ++s) {
    const std::size_t out = s + 1 == stages ? cfg.fusion_channels : cfg.fusion_hidden;
    h.up.push_back(ConvTranspose2d::init(in, out, 4, 2, 1, rng));
    in = out;
  }
  return h;
}

void FusionHead::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < up.size(); ++i) up[i].collect(prefix + ".up" + std::to_string(i), out, ParamGroup::generator);
}

Tensor cross_domain_fuse(const Tensor& tokens1, const Tensor& tokens2, const CrossDomainParams& p,
                         AttentionTrace* trace) {
  check_tokens(tokens1, tokens2, "cross_domain_fuse");
  const Tensor q1 = p.q1(tokens1), k1 = p.k1(tokens1), v1 = p.v1(tokens1);
  const Tensor q2 = p.q2(tokens2), k2 = p.k2(tokens2), v2 = p.v2(tokens2);
  // The residual adds the projected query.
  const Tensor z1 = attention_block(q1, k2, v2, p.norm1, p.ffn1, trace) + q1;
  const Tensor z2 = attention_block(q2, k1, v1, p.norm2, p.ffn2, trace) + q2;
  return p.fuse(concat({z1, z2}, 1));
}

Tensor complementary_fuse(const Tensor& tokens1, const Tensor& tokens2, const Tensor& z_c,
                          const ComplementaryParams& p, AttentionTrace* trace) {
  check_tokens(tokens1, tokens2, "complementary_fuse");
  if (z_c.rank() != 2 || z_c.dim(0) != tokens1.dim(0) || z_c.dim(1) != p.q_f.in_features()) {
    throw DimensionError("complementary_fuse: z_c " + shape_str(z_c.shape()) + " does not match tokens " +
                         shape_str(tokens1.shape()));
  }
  // Complementary stream: what differs between the modalities queries the
  // pooled set of both token sequences.
  const Tensor diff = tokens1 - tokens2;
  const Tensor pair = concat({tokens1, tokens2}, 0);
  const Tensor q_d = p.q_diff(diff);
  const Tensor z0 = attention_block(q_d, p.k_pair(pair), p.v_pair(pair), p.norm0, p.ffn0, trace) + q_d;
  return attention_block(p.q_f(z_c), p.k_0(z0), p.v_0(z0), p.norm_f, p.ffn_f, trace) + z_c;
}

Tensor concat_fuse(const Tensor& tokens1, const Tensor& tokens2, const ConcatParams& p) {
  check_tokens(tokens1, tokens2, "concat_fuse");
  return p.mix(concat({tokens1, tokens2}, 1));
}

FusionMask fusion_mask(const Tensor& z_f, const FusionHead& head) {
  if (z_f.rank() != 3) throw DimensionError("fusion_mask: expected hxwxdc grid, got " + shape_str(z_f.shape()));
  Tensor x = hwc_to_nchw(z_f);
  for (std::size_t i = 0; i < head.up.size(); ++i) {
    x = head.up[i](x);
    x = i + 1 == head.up.size() ? sigmoid(x) : relu(x);
  }
  return {nchw_to_hwc(x), z_f};
}

}  // namespace fusionsam
