#include "fusionsam/lstg.hpp"

#include <bit>
#include <limits>

#include "fusionsam/error.hpp"

namespace fusionsam {

namespace {

std::size_t stages_for_scale(std::size_t scale) {
  if (scale < 2 || !std::has_single_bit(scale)) {
    throw ConfigError("LSTG scale must be a power of two >= 2, got " + std::to_string(scale));
  }
  return static_cast<std::size_t>(std::countr_zero(scale));
}

}  // namespace

Encoder Encoder::init(const LstgConfig& cfg, Rng& rng) {
  Encoder e;
  e.scale = cfg.scale;
  const std::size_t stages = stages_for_scale(cfg.scale);
  std::size_t in = cfg.in_channels;
  for (std::size_t s = 0; s < stages; ++s) {
    e.down.push_back(Conv2d::init(in, cfg.hidden, 4, 2, 1, rng));
    in = cfg.hidden;
  }
  e.head = Conv2d::init(in, cfg.latent_dim, 3, 1, 1, rng);
  return e;
}

Tensor Encoder::operator()(const Tensor& image) const {
  if (image.rank() != 3) throw DimensionError("encode: expected HxWxC image, got " + shape_str(image.shape()));
  if (image.dim(0) % scale != 0 || image.dim(1) % scale != 0) {
    throw DimensionError("encode: image " + shape_str(image.shape()) + " not divisible by scale " +
                         std::to_string(scale));
  }
  Tensor x = hwc_to_nchw(image);
  for (const Conv2d& c : down) x = relu(c(x));
  return nchw_to_hwc(head(x));
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < down.size(); ++i) down[i].collect(prefix + ".down" + std::to_string(i), out, ParamGroup::generator);
  head.collect(prefix + ".head", out, ParamGroup::generator);
}

Decoder Decoder::init(const LstgConfig& cfg, Rng& rng) {
  Decoder d;
  d.stem = Conv2d::init(cfg.latent_dim, cfg.hidden, 3, 1, 1, rng);
  const std::size_t stages = stages_for_scale(cfg.scale);
  for (std::size_t s = 0; s < stages; ++s) {
    const std::size_t out = s + 1 == stages ? cfg.in_channels : cfg.hidden;
    d.up.push_back(ConvTranspose2d::init(cfg.hidden, out, 4, 2, 1, rng));
  }
  return d;
}

Tensor Decoder::operator()(const Tensor& latent) const {
  if (latent.rank() != 3) throw DimensionError("decode: expected hxwxdc latent, got " + shape_str(latent.shape()));
  Tensor x = relu(stem(hwc_to_nchw(latent)));
  for (std::size_t i = 0; i < up.size(); ++i) {
    x = up[i](x);
    x = i + 1 == up.size() ? sigmoid(x) : relu(x);
  }
  return nchw_to_hwc(x);
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem", out, ParamGroup::generator);
  for (std::size_t i = 0; i < up.size(); ++i) up[i].collect(prefix + ".up" + std::to_string(i), out, ParamGroup::generator);
}

Codebook Codebook::init(std::size_t size, std::size_t dim, Rng& rng) {
  if (size < 2) throw ConfigError("codebook needs at least 2 entries");
  if (dim == 0) throw ConfigError("codebook entry width must be positive");
  Codebook cb;
  cb.entries = uniform_param({size, dim}, Scalar(1) / static_cast<Scalar>(size), rng);
  cb.usage.assign(size, 0);
  return cb;
}

std::size_t Codebook::nearest(std::span<const Scalar> v) const {
  if (!entries.defined() || size() == 0) throw ConfigError("quantize: empty codebook");
  const std::size_t d = dim();
  if (v.size() != d) {
    throw DimensionError("quantize: latent width " + std::to_string(v.size()) + " vs codebook width " +
                         std::to_string(d));
  }
  const auto table = entries.data();
  std::size_t best = 0;
  Scalar best_dist = std::numeric_limits<Scalar>::infinity();
  for (std::size_t k = 0; k < size(); ++k) {
    const Scalar* c = table.data() + k * d;
    Scalar dist = 0;
    std::size_t j = 0;
    // Partial sums only grow, so a candidate can be dropped once it exceeds
    // the incumbent; equal distances run to completion and keep the lower k.
    for (; j < d && dist <= best_dist; ++j) {
      const Scalar diff = v[j] - c[j];
      dist += diff * diff;
    }
    if (j == d && dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

std::size_t Codebook::reseed_dead(std::span<const std::int64_t> usage_before, std::span<const Scalar> candidates,
                                  Rng& rng) {
  if (usage_before.size() != usage.size()) throw ContractError("reseed_dead: usage snapshot length mismatch");
  const std::size_t d = dim();
  if (candidates.empty() || candidates.size() % d != 0) return 0;
  const std::size_t rows = candidates.size() / d;
  auto table = entries.mutable_data();
  std::size_t count = 0;
  for (std::size_t k = 0; k < usage.size(); ++k) {
    if (usage[k] != usage_before[k]) continue;
    const std::size_t r = rng.index(rows);
    for (std::size_t j = 0; j < d; ++j) table[k * d + j] = candidates[r * d + j];
    ++count;
  }
  return count;
}

Tensor LatentTokens::straight_through_value() const { return straight_through(pre_quant, quantized); }

Tensor encode(const Tensor& image, const Encoder& encoder) { return encoder(image); }

LatentTokens quantize(const Tensor& z, Codebook& codebook, bool count_usage) {
  if (!codebook.entries.defined() || codebook.size() == 0) throw ConfigError("quantize: empty codebook");
  if (z.rank() != 3) throw DimensionError("quantize: expected hxwxdc latent, got " + shape_str(z.shape()));
  const std::size_t d = z.dim(2);
  if (d != codebook.dim()) {
    throw DimensionError("quantize: latent width " + std::to_string(d) + " vs codebook width " +
                         std::to_string(codebook.dim()));
  }
  LatentTokens t;
  t.h = z.dim(0);
  t.w = z.dim(1);
  t.pre_quant = z;
  t.indices.resize(t.h * t.w);
  const auto values = z.data();
  for (std::size_t p = 0; p < t.indices.size(); ++p) {
    t.indices[p] = codebook.nearest(values.subspan(p * d, d));
    if (count_usage) ++codebook.usage[t.indices[p]];
  }
  t.quantized = reshape(gather_rows(codebook.entries, t.indices), {t.h, t.w, d});
  return t;
}

Tensor decode(const LatentTokens& tokens, const Decoder& decoder) {
  return decoder(tokens.straight_through_value());
}

PerceptualNet PerceptualNet::init(std::size_t in_channels, Rng& rng) {
  PerceptualNet p;
  p.layers.push_back(Conv2d::init(in_channels, 8, 3, 1, 1, rng));
  p.layers.push_back(Conv2d::init(8, 16, 3, 2, 1, rng));
  p.layers.push_back(Conv2d::init(16, 16, 3, 2, 1, rng));
  for (Conv2d& c : p.layers) {
    c.weight.set_requires_grad(false);
    c.bias.set_requires_grad(false);
  }
  return p;
}

Tensor PerceptualNet::features(const Tensor& image) const {
  Tensor x = hwc_to_nchw(image);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = relu(x);
  }
  return x;
}

void PerceptualNet::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".conv" + std::to_string(i), out, ParamGroup::frozen);
}

Discriminator Discriminator::init(std::size_t in_channels, Rng& rng) {
  Discriminator d;
  d.layers.push_back(Conv2d::init(in_channels, 16, 4, 2, 1, rng));
  d.layers.push_back(Conv2d::init(16, 32, 4, 2, 1, rng));
  d.layers.push_back(Conv2d::init(32, 1, 4, 2, 1, rng));
  return d;
}

Tensor Discriminator::score(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) % kDownsample != 0 || image.dim(1) % kDownsample != 0) {
    throw DimensionError("discriminator: image " + shape_str(image.shape()) + " not divisible by 8");
  }
  Tensor x = hwc_to_nchw(image);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = leaky_relu(x, Scalar(0.2));
  }
  return x;
}

void Discriminator::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".conv" + std::to_string(i), out, ParamGroup::discriminator);
}

void LossWeights::validate() const {
  if (alpha < 0 || commit_beta < 0 || adv_beta < 0 || gamma < 0) {
    throw ConfigError("LSTG loss weights must be non-negative");
  }
}

LstgLossParts lstg_loss(std::span<const ModalityTerms> terms, const LossWeights& weights) {
  weights.validate();
  if (terms.empty()) throw ContractError("lstg_loss: no modalities");
  Tensor rec = Tensor::scalar(0);
  Tensor commit = Tensor::scalar(0);
  Tensor perc = Tensor::scalar(0);
  Tensor adv_g = Tensor::scalar(0);
  Tensor adv_d = Tensor::scalar(0);
  for (const ModalityTerms& m : terms) {
    if (m.image.shape() != m.recon.shape()) {
      throw DimensionError("lstg_loss: image " + shape_str(m.image.shape()) + " vs reconstruction " +
                           shape_str(m.recon.shape()));
    }
    rec = rec + sum_squares(m.image - m.recon);
    // Codebook side pulls entries toward sg[z]; encoder side pulls z toward sg[zq].
    commit = commit + sum_squares(stop_gradient(m.pre_quant) - m.quantized) +
             scale(sum_squares(stop_gradient(m.quantized) - m.pre_quant), static_cast<Scalar>(weights.commit_beta));
    if (m.perceptual != nullptr) {
      perc = perc + sum_squares(m.perceptual->features(m.image) - m.perceptual->features(m.recon));
    }
    if (m.disc != nullptr) {
      // log D(x) = -softplus(-l), log(1 - D(x)) = -softplus(l) with D = sigmoid(l).
      adv_g = adv_g + mean(softplus(scale(m.disc->score(m.recon), Scalar(-1))));
      adv_d = adv_d + mean(softplus(scale(m.disc->score(m.image), Scalar(-1)))) +
              mean(softplus(m.disc->score(stop_gradient(m.recon))));
    }
  }
  LstgLossParts parts;
  parts.rec = rec;
  parts.commit = commit;
  parts.perc = perc;
  parts.adv_g = adv_g;
  parts.adv_d = adv_d;
  parts.total_g = rec + scale(perc, static_cast<Scalar>(weights.alpha)) +
                  scale(adv_g, static_cast<Scalar>(weights.adv_beta)) +
                  scale(commit, static_cast<Scalar>(weights.gamma));
  return parts;
}

}  // namespace fusionsam
