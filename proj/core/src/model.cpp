#include "fusionsam/model.hpp"

#include <algorithm>

#include "fusionsam/error.hpp"

namespace fusionsam {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_lstg: return "no_lstg";
    case Variant::no_fmp_concat: return "no_fmp_concat";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_lstg") return Variant::no_lstg;
  if (s == "no_fmp_concat") return Variant::no_fmp_concat;
  throw ConfigError("unknown variant '" + s + "' (expected full, no_lstg or no_fmp_concat)");
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (codebook_size < 2) throw ConfigError("codebook_size must be >= 2");
  if (latent_dim == 0 || latent_dim % 4 != 0) throw ConfigError("latent_dim must be a positive multiple of 4");
  if (token_dim == 0 || token_dim % 4 != 0) throw ConfigError("token_dim must be a positive multiple of 4");
  if (variant == Variant::no_lstg && latent_dim < std::max(vis_channels, ir_channels)) {
    throw ConfigError("latent_dim must hold the raw image channels for the no_lstg variant");
  }
}

LstgConfig ModelConfig::lstg(std::size_t in_channels) const {
  return {in_channels, scale, lstg_hidden, latent_dim};
}

FmpConfig ModelConfig::fmp() const {
  return {latent_dim, key_dim, fmp_feed_forward, fmp_positional, scale, fusion_channels, fusion_hidden};
}

SegConfig ModelConfig::seg() const {
  return {num_classes, fusion_channels, patch, token_dim, encoder_blocks, decoder_layers, upscale_dim};
}

FusionSamModel::FusionSamModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  enc_vis = Encoder::init(cfg_.lstg(cfg_.vis_channels), rng);
  enc_ir = Encoder::init(cfg_.lstg(cfg_.ir_channels), rng);
  dec_vis = Decoder::init(cfg_.lstg(cfg_.vis_channels), rng);
  dec_ir = Decoder::init(cfg_.lstg(cfg_.ir_channels), rng);
  codebook = Codebook::init(cfg_.codebook_size, cfg_.latent_dim, rng);
  if (!cfg_.shared_codebook) codebook_ir = Codebook::init(cfg_.codebook_size, cfg_.latent_dim, rng);
  disc_vis = Discriminator::init(cfg_.vis_channels, rng);
  disc_ir = Discriminator::init(cfg_.ir_channels, rng);
  perc_vis = PerceptualNet::init(cfg_.vis_channels, rng);
  perc_ir = PerceptualNet::init(cfg_.ir_channels, rng);

  const FmpConfig fc = cfg_.fmp();
  cross = CrossDomainParams::init(fc, rng);
  complementary = ComplementaryParams::init(fc, rng);
  concat_mix = ConcatParams::init(fc, rng);
  fusion_head = FusionHead::init(fc, rng);

  const SegConfig sc = cfg_.seg();
  image_encoder = ImageEncoder::init(sc, rng);
  prompt_encoder = PromptEncoder::init(sc, rng);
  output_tokens = OutputTokens::init(sc, rng);
  mask_decoder = MaskDecoder::init(sc, rng);
}

Codebook& FusionSamModel::codebook_for(std::size_t modality) {
  return modality == 0 || cfg_.shared_codebook ? codebook : codebook_ir;
}

std::vector<Codebook*> FusionSamModel::codebooks() {
  if (!has_lstg()) return {};
  if (cfg_.shared_codebook) return {&codebook};
  return {&codebook, &codebook_ir};
}

std::vector<std::string> FusionSamModel::codebook_prefixes() const {
  if (!has_lstg()) return {};
  if (cfg_.shared_codebook) return {"lstg.codebook"};
  return {"lstg.codebook.vis", "lstg.codebook.ir"};
}

Tensor FusionSamModel::latent_for_ablation(const Tensor& image) const {
  // Without latent token generation the fusion stage sees s x s mean-pooled
  // pixels, zero-padded to the latent width.
  Tensor pooled = nchw_to_hwc(avg_pool2d(hwc_to_nchw(image), cfg_.scale));
  const std::size_t c = pooled.dim(2);
  if (c == cfg_.latent_dim) return pooled;
  return concat({pooled, Tensor::zeros({pooled.dim(0), pooled.dim(1), cfg_.latent_dim - c})}, 2);
}

ForwardResult FusionSamModel::fuse(const Tensor& vis, const Tensor& ir, bool count_usage, AttentionTrace* trace) {
  if (vis.rank() != 3 || ir.rank() != 3 || vis.dim(0) != ir.dim(0) || vis.dim(1) != ir.dim(1)) {
    throw DimensionError("fuse: modalities are not aligned: " + shape_str(vis.shape()) + " vs " + shape_str(ir.shape()));
  }
  ForwardResult r;
  if (has_lstg()) {
    r.vis_tokens = quantize(encode(vis, enc_vis), codebook_for(0), count_usage);
    r.ir_tokens = quantize(encode(ir, enc_ir), codebook_for(1), count_usage);
    r.vis_recon = fusionsam::decode(*r.vis_tokens, dec_vis);
    r.ir_recon = fusionsam::decode(*r.ir_tokens, dec_ir);
    r.vis_latent = r.vis_tokens->straight_through_value();
    r.ir_latent = r.ir_tokens->straight_through_value();
  } else {
    if (vis.dim(0) % cfg_.scale != 0 || vis.dim(1) % cfg_.scale != 0) {
      throw DimensionError("fuse: image " + shape_str(vis.shape()) + " not divisible by scale");
    }
    r.vis_latent = latent_for_ablation(vis);
    r.ir_latent = latent_for_ablation(ir);
  }
  const std::size_t h = r.vis_latent.dim(0), w = r.vis_latent.dim(1), dc = cfg_.latent_dim;
  Tensor t1 = reshape(r.vis_latent, {h * w, dc});
  Tensor t2 = reshape(r.ir_latent, {h * w, dc});
  if (cfg_.fmp_positional) {
    const Tensor pe = sinusoidal_grid_encoding(h, w, dc);
    t1 = t1 + pe;
    t2 = t2 + pe;
  }
  Tensor z_f;
  if (cfg_.variant == Variant::no_fmp_concat) {
    z_f = concat_fuse(t1, t2, concat_mix);
  } else {
    const Tensor z_c = cross_domain_fuse(t1, t2, cross, trace);
    z_f = complementary_fuse(t1, t2, z_c, complementary, trace);
  }
  r.fusion = fusion_mask(reshape(z_f, {h, w, dc}), fusion_head);
  return r;
}

Tensor FusionSamModel::decode(const ForwardResult& fused, const PromptSet* prompts, AttentionTrace* trace) const {
  const Tensor embedding = image_encoder(fused.fusion.map);
  const Tensor prompt_tokens = prompts != nullptr ? prompt_encoder(*prompts) : Tensor();
  return mask_decoder(embedding, prompt_tokens, output_tokens, trace);
}

ForwardResult FusionSamModel::forward(const Tensor& vis, const Tensor& ir, const PromptSet* prompts, bool count_usage,
                                      AttentionTrace* trace) {
  ForwardResult r = fuse(vis, ir, count_usage, trace);
  r.embedding = image_encoder(r.fusion.map);
  const Tensor prompt_tokens = prompts != nullptr ? prompt_encoder(*prompts) : Tensor();
  r.logits = mask_decoder(r.embedding, prompt_tokens, output_tokens, trace);
  return r;
}

ParamList FusionSamModel::parameters() const {
  ParamList out;
  if (has_lstg()) {
    enc_vis.collect("lstg.enc.vis", out);
    enc_ir.collect("lstg.enc.ir", out);
    dec_vis.collect("lstg.dec.vis", out);
    dec_ir.collect("lstg.dec.ir", out);
    const auto prefixes = codebook_prefixes();
    out.push_back({prefixes[0] + ".entries", codebook.entries, ParamGroup::generator});
    if (!cfg_.shared_codebook) out.push_back({prefixes[1] + ".entries", codebook_ir.entries, ParamGroup::generator});
    disc_vis.collect("lstg.disc.vis", out);
    disc_ir.collect("lstg.disc.ir", out);
    perc_vis.collect("lstg.perc.vis", out);
    perc_ir.collect("lstg.perc.ir", out);
  }
  if (cfg_.variant == Variant::no_fmp_concat) {
    concat_mix.collect("fmp.concat", out);
  } else {
    cross.collect("fmp.cross", out);
    complementary.collect("fmp.complementary", out);
  }
  fusion_head.collect("fmp.head", out);
  image_encoder.collect("seg.image_encoder", out);
  prompt_encoder.collect("seg.prompt", out);
  out.push_back({"seg.fot", output_tokens.fot, ParamGroup::generator});
  mask_decoder.collect("seg.mask_decoder", out);
  std::sort(out.begin(), out.end(), [](const NamedParam& a, const NamedParam& b) { return a.name < b.name; });
  return out;
}

}  // namespace fusionsam
