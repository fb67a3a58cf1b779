#pragma once

// Prompt-guided mask decoding: a frozen ViT image encoder over the fusion
// mask, point/box prompt tokens, per-class output tokens, and a two-way
// attention decoder that emits per-class logit maps.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fusionsam/fmp.hpp"
#include "fusionsam/label_grid.hpp"
#include "fusionsam/nn.hpp"
#include "fusionsam/random.hpp"
#include "fusionsam/tensor.hpp"

namespace fusionsam {

struct SegConfig {
  std::size_t num_classes = 4;
  std::size_t fusion_channels = 3;
  std::size_t patch = 4;
  std::size_t token_dim = 32;  // d_tok, multiple of 4
  std::size_t encoder_blocks = 2;
  std::size_t decoder_layers = 2;
  std::size_t upscale_dim = 8;  // per-pixel embedding width after upsampling
};

struct TransformerBlock {
  LayerNorm norm1;
  Linear q, k, v, proj;
  LayerNorm norm2;
  Linear fc1, fc2;

  static TransformerBlock init(std::size_t dim, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out, ParamGroup group) const;
};

// Patchify + pre-norm transformer blocks. Excluded from training: its
// tensors never require gradients, yet gradients still pass through it to
// the fusion mask.
class ImageEncoder {
 public:
  static ImageEncoder init(const SegConfig& cfg, Rng& rng);
  /// [H x W x C_f] -> [H/p x W/p x d_tok].
  Tensor operator()(const Tensor& fusion_map) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::size_t patch = 4;
  Linear patch_embed;
  std::vector<TransformerBlock> blocks;
  LayerNorm norm;
};

Tensor image_encode(const FusionMask& fusion, const ImageEncoder& encoder);

struct PromptPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  int class_id = 0;
};

struct PromptBox {
  std::size_t row_min = 0, col_min = 0, row_max = 0, col_max = 0;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  PromptBox box;
  bool fallback = false;  // no foreground was found; center point + full box
  std::size_t height = 0;
  std::size_t width = 0;

  void validate() const;
};

/// Places k points on foreground (class != 0) pixels, split round-robin over
/// the present classes in ascending id order. Within a class region points
/// go to the highest fusion-mask activation (channel mean), ties broken in
/// row-major order. A region smaller than its allocation is sampled with
/// replacement using `seed`. The box is the tight bound of all foreground.
PromptSet sample_prompts(const FusionMask& fusion, const LabelGrid& labels, std::size_t k, std::uint64_t seed);

class PromptEncoder {
 public:
  static PromptEncoder init(const SegConfig& cfg, Rng& rng);
  /// [(points + 2) x d_tok]: point tokens, then the two box-corner tokens.
  Tensor operator()(const PromptSet& prompts) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor class_embed;   // [num_classes x d_tok]
  Tensor corner_embed;  // [2 x d_tok]
};

Tensor prompt_encode(const PromptSet& prompts, const PromptEncoder& encoder);

struct OutputTokens {
  Tensor fot;  // [num_classes x d_tok]
  static OutputTokens init(const SegConfig& cfg, Rng& rng);
};

struct AttentionUnit {
  Linear q, k, v, proj;
  static AttentionUnit init(std::size_t dim, Rng& rng);
  Tensor operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, AttentionTrace* trace) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct TwoWayLayer {
  AttentionUnit self_attn;
  LayerNorm norm1;
  AttentionUnit token_to_image;
  LayerNorm norm2;
  Linear mlp1, mlp2;
  LayerNorm norm3;
  AttentionUnit image_to_token;
  LayerNorm norm4;

  static TwoWayLayer init(std::size_t dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

class MaskDecoder {
 public:
  static MaskDecoder init(const SegConfig& cfg, Rng& rng);
  /// embedding [h x w x d_tok]; prompt_tokens [n x d_tok] or undefined for a
  /// prompt-free pass. Returns logits [num_classes x h*p x w*p].
  Tensor operator()(const Tensor& embedding, const Tensor& prompt_tokens, const OutputTokens& tokens,
                    AttentionTrace* trace = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<TwoWayLayer> layers;
  AttentionUnit final_attn;
  LayerNorm final_norm;
  std::vector<ConvTranspose2d> upscale;
  Linear head1, head2, head3;  // per-token MLP classification head
};

Tensor mask_decode(const Tensor& embedding, const Tensor& prompt_tokens, const OutputTokens& fot,
                   const MaskDecoder& decoder, AttentionTrace* trace = nullptr);

struct SegmentationMask {
  LabelGrid classes;
  Tensor logits;  // [num_classes x H x W]
};

/// Per-pixel argmax, lowest class index on ties.
SegmentationMask segment(const Tensor& logits);

}  // namespace fusionsam
