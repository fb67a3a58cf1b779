#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusionsam/fmp.hpp"
#include "fusionsam/label_grid.hpp"
#include "fusionsam/lstg.hpp"
#include "fusionsam/nn.hpp"
#include "fusionsam/segmentation.hpp"

namespace fusionsam {

// Pipeline variants: the complete model, the model without latent token
// generation, and the model with attention fusion replaced by concat + conv.
enum class Variant { full, no_lstg, no_fmp_concat };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::full;
  std::size_t num_classes = 4;
  std::size_t vis_channels = 3;
  std::size_t ir_channels = 1;
  std::size_t scale = 4;
  std::size_t lstg_hidden = 32;
  std::size_t latent_dim = 64;      // dc
  std::size_t codebook_size = 256;  // K
  bool shared_codebook = true;
  std::size_t key_dim = 0;          // 0 -> latent_dim
  bool fmp_feed_forward = false;
  bool fmp_positional = true;
  std::size_t fusion_channels = 3;
  std::size_t fusion_hidden = 32;
  std::size_t patch = 4;
  std::size_t token_dim = 32;
  std::size_t encoder_blocks = 2;
  std::size_t decoder_layers = 2;
  std::size_t upscale_dim = 8;
  std::uint64_t init_seed = 0;

  void validate() const;
  LstgConfig lstg(std::size_t in_channels) const;
  FmpConfig fmp() const;
  SegConfig seg() const;
};

struct ForwardResult {
  std::optional<LatentTokens> vis_tokens, ir_tokens;
  Tensor vis_recon, ir_recon;  // defined when LSTG is active
  Tensor vis_latent, ir_latent; // token grids fed to fusion, [h x w x dc]
  FusionMask fusion;
  Tensor embedding;
  Tensor logits;  // [num_classes x H x W]
};

class FusionSamModel {
 public:
  explicit FusionSamModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  bool has_lstg() const { return cfg_.variant != Variant::no_lstg; }

  /// LSTG + FMP: both images ([H x W x C]) to the fusion mask.
  ForwardResult fuse(const Tensor& vis, const Tensor& ir, bool count_usage, AttentionTrace* trace = nullptr);
  /// Full forward. `prompts` may be null for a prompt-free pass.
  ForwardResult forward(const Tensor& vis, const Tensor& ir, const PromptSet* prompts, bool count_usage,
                        AttentionTrace* trace = nullptr);
  /// Decoder pass for an already computed fusion result.
  Tensor decode(const ForwardResult& fused, const PromptSet* prompts, AttentionTrace* trace = nullptr) const;

  /// Every tensor with a stable name, sorted by name.
  ParamList parameters() const;

  Codebook& codebook_for(std::size_t modality);
  std::vector<Codebook*> codebooks();
  std::vector<std::string> codebook_prefixes() const;

  Encoder enc_vis, enc_ir;
  Decoder dec_vis, dec_ir;
  Codebook codebook;     // shared, or the visible-modality codebook
  Codebook codebook_ir;  // only when not shared
  Discriminator disc_vis, disc_ir;
  PerceptualNet perc_vis, perc_ir;

  CrossDomainParams cross;
  ComplementaryParams complementary;
  ConcatParams concat_mix;
  FusionHead fusion_head;

  ImageEncoder image_encoder;
  PromptEncoder prompt_encoder;
  OutputTokens output_tokens;
  MaskDecoder mask_decoder;

 private:
  Tensor latent_for_ablation(const Tensor& image) const;
  ModelConfig cfg_;
};

}  // namespace fusionsam
