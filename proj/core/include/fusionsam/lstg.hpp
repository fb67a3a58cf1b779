#pragma once

// Latent space token generation: per-modality convolutional encoder, vector
// quantization against a learned codebook, transposed-convolution decoder,
// and the VQGAN-style objective (reconstruction, commitment, perceptual,
// adversarial).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fusionsam/nn.hpp"
#include "fusionsam/random.hpp"
#include "fusionsam/tensor.hpp"

namespace fusionsam {

struct LstgConfig {
  std::size_t in_channels = 3;
  std::size_t scale = 4;  // power of two; h = H / scale
  std::size_t hidden = 32;
  std::size_t latent_dim = 64;
};

class Encoder {
 public:
  static Encoder init(const LstgConfig& cfg, Rng& rng);
  /// [H x W x C] -> [H/s x W/s x dc].
  Tensor operator()(const Tensor& image) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<Conv2d> down;  // stride-2 stages
  Conv2d head;               // final 3x3 projection to latent_dim
  std::size_t scale = 4;
};

class Decoder {
 public:
  static Decoder init(const LstgConfig& cfg, Rng& rng);
  /// [h x w x dc] -> [h*s x w*s x C], values in (0, 1).
  Tensor operator()(const Tensor& latent) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Conv2d stem;
  std::vector<ConvTranspose2d> up;
};

class Codebook {
 public:
  static Codebook init(std::size_t size, std::size_t dim, Rng& rng);

  std::size_t size() const { return entries.dim(0); }
  std::size_t dim() const { return entries.dim(1); }

  /// Nearest entry by squared Euclidean distance; ties go to the lowest index.
  std::size_t nearest(std::span<const Scalar> v) const;

  /// Replaces every entry whose usage did not grow since `usage_before` with a
  /// randomly chosen row of `candidates` ([n x dim]). Returns how many entries
  /// were re-seeded.
  std::size_t reseed_dead(std::span<const std::int64_t> usage_before, std::span<const Scalar> candidates, Rng& rng);

  Tensor entries;                   // [K x dc], learnable
  std::vector<std::int64_t> usage;  // per-entry selection counts
};

struct LatentTokens {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::size_t> indices;  // row-major h x w
  Tensor quantized;                  // [h x w x dc], rows copied from the codebook
  Tensor pre_quant;                  // [h x w x dc], encoder output

  /// Quantized values forward, gradient routed to pre_quant.
  Tensor straight_through_value() const;
};

Tensor encode(const Tensor& image, const Encoder& encoder);
/// Maps every latent position to its nearest codebook entry and bumps the
/// entry's usage counter when `count_usage` is set.
LatentTokens quantize(const Tensor& z, Codebook& codebook, bool count_usage = true);
Tensor decode(const LatentTokens& tokens, const Decoder& decoder);

// Fixed, non-trainable feature map used by the perceptual term.
class PerceptualNet {
 public:
  static PerceptualNet init(std::size_t in_channels, Rng& rng);
  Tensor features(const Tensor& image) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<Conv2d> layers;
};

// Patch discriminator: three stride-2 convolutions, so the logit grid is
// the input grid divided by kDownsample.
class Discriminator {
 public:
  static constexpr std::size_t kDownsample = 8;
  static Discriminator init(std::size_t in_channels, Rng& rng);
  /// [H x W x C] -> [1 x 1 x H/8 x W/8] logits.
  Tensor score(const Tensor& image) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<Conv2d> layers;
};

struct LossWeights {
  double alpha = 0.1;        // perceptual
  double commit_beta = 0.25; // weight of the encoder-side commitment term
  double adv_beta = 0.05;    // adversarial
  double gamma = 1.0;        // commitment

  void validate() const;
};

struct LstgLossParts {
  Tensor rec;
  Tensor commit;
  Tensor perc;
  Tensor adv_g;   // generator term: -log D(x_hat)
  Tensor adv_d;   // discriminator loss, the negated log-likelihood it ascends
  Tensor total_g; // rec + alpha perc + adv_beta adv_g + gamma commit
};

struct ModalityTerms {
  Tensor image;
  Tensor recon;
  Tensor pre_quant;
  Tensor quantized;
  const Discriminator* disc = nullptr;      // null disables both adversarial terms
  const PerceptualNet* perceptual = nullptr; // null disables the perceptual term
};

/// Sums every term over the given modalities. Norms are squared Euclidean
/// norms summed over elements; adversarial terms average over patch logits.
LstgLossParts lstg_loss(std::span<const ModalityTerms> terms, const LossWeights& weights);

}  // namespace fusionsam
