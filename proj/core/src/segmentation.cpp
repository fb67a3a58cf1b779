#include "fusionsam/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionsam/error.hpp"

namespace fusionsam {

namespace {

Tensor grid_to_tokens(const Tensor& grid) { return reshape(grid, {grid.dim(0) * grid.dim(1), grid.dim(2)}); }

}  // namespace

TransformerBlock TransformerBlock::init(std::size_t dim, Rng& rng) {
  return {LayerNorm::init(dim),         Linear::init(dim, dim, rng, false), Linear::init(dim, dim, rng, false),
          Linear::init(dim, dim, rng, false), Linear::init(dim, dim, rng),  LayerNorm::init(dim),
          Linear::init(dim, 2 * dim, rng), Linear::init(2 * dim, dim, rng)};
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  const Tensor h = norm1(x);
  Tensor y = x + proj(scaled_dot_attention(q(h), k(h), v(h), nullptr));
  return y + fc2(gelu(fc1(norm2(y))));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out, ParamGroup group) const {
  norm1.collect(prefix + ".norm1", out, group);
  q.collect(prefix + ".q", out, group);
  k.collect(prefix + ".k", out, group);
  v.collect(prefix + ".v", out, group);
  proj.collect(prefix + ".proj", out, group);
  norm2.collect(prefix + ".norm2", out, group);
  fc1.collect(prefix + ".fc1", out, group);
  fc2.collect(prefix + ".fc2", out, group);
}

ImageEncoder ImageEncoder::init(const SegConfig& cfg, Rng& rng) {
  if (cfg.patch == 0) throw ConfigError("patch size must be positive");
  if (cfg.token_dim == 0 || cfg.token_dim % 4 != 0) throw ConfigError("token_dim must be a positive multiple of 4");
  ImageEncoder e;
  e.patch = cfg.patch;
  e.patch_embed = Linear::init(cfg.patch * cfg.patch * cfg.fusion_channels, cfg.token_dim, rng);
  for (std::size_t b = 0; b < cfg.encoder_blocks; ++b) e.blocks.push_back(TransformerBlock::init(cfg.token_dim, rng));
  e.norm = LayerNorm::init(cfg.token_dim);
  ParamList all;
  e.collect("", all);
  set_trainable(all, false);
  return e;
}

Tensor ImageEncoder::operator()(const Tensor& fusion_map) const {
  if (fusion_map.rank() != 3) throw DimensionError("image_encode: expected HxWxC map, got " + shape_str(fusion_map.shape()));
  const std::size_t H = fusion_map.dim(0), W = fusion_map.dim(1), C = fusion_map.dim(2);
  if (H % patch != 0 || W % patch != 0) {
    throw DimensionError("image_encode: map " + shape_str(fusion_map.shape()) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const std::size_t gh = H / patch, gw = W / patch;
  // [gh, p, gw, p, C] -> [gh, gw, p, p, C] -> [gh*gw, p*p*C]
  Tensor x = reshape(fusion_map, {gh, patch, gw, patch, C});
  x = permute(x, {0, 2, 1, 3, 4});
  x = reshape(x, {gh * gw, patch * patch * C});
  const std::size_t d = patch_embed.out_features();
  x = patch_embed(x) + sinusoidal_grid_encoding(gh, gw, d);
  for (const TransformerBlock& b : blocks) x = b(x);
  return reshape(norm(x), {gh, gw, d});
}

void ImageEncoder::collect(const std::string& prefix, ParamList& out) const {
  patch_embed.collect(prefix + ".patch_embed", out, ParamGroup::frozen);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".block" + std::to_string(i), out, ParamGroup::frozen);
  norm.collect(prefix + ".norm", out, ParamGroup::frozen);
}

Tensor image_encode(const FusionMask& fusion, const ImageEncoder& encoder) { return encoder(fusion.map); }

void PromptSet::validate() const {
  if (height == 0 || width == 0) throw ContractError("prompt set has no image extent");
  for (const PromptPoint& p : points) {
    if (p.row >= height || p.col >= width) {
      throw ContractError("prompt point (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                          ") outside the image");
    }
  }
  if (box.row_min > box.row_max || box.col_min > box.col_max || box.row_max >= height || box.col_max >= width) {
    throw ContractError("prompt box is empty or outside the image");
  }
}

PromptSet sample_prompts(const FusionMask& fusion, const LabelGrid& labels, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("sample_prompts: need at least one point");
  const Tensor& map = fusion.map;
  if (map.rank() != 3 || map.dim(0) != labels.height || map.dim(1) != labels.width) {
    throw DimensionError("sample_prompts: fusion map " + shape_str(map.shape()) + " vs labels " +
                         std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  const std::size_t H = labels.height, W = labels.width, C = map.dim(2);
  PromptSet ps;
  ps.height = H;
  ps.width = W;

  std::vector<int> classes;
  bool any = false;
  PromptBox box{H, W, 0, 0};
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const int id = labels.at(r, c);
      if (id == 0) continue;
      any = true;
      if (std::find(classes.begin(), classes.end(), id) == classes.end()) classes.push_back(id);
      box.row_min = std::min(box.row_min, r);
      box.col_min = std::min(box.col_min, c);
      box.row_max = std::max(box.row_max, r);
      box.col_max = std::max(box.col_max, c);
    }
  }
  if (!any) {
    ps.points.push_back({H / 2, W / 2, 0});
    ps.box = {0, 0, H - 1, W - 1};
    ps.fallback = true;
    return ps;
  }
  std::sort(classes.begin(), classes.end());
  ps.box = box;

  const auto values = map.data();
  auto activation = [&](std::size_t pix) {
    Scalar s = 0;
    for (std::size_t ch = 0; ch < C; ++ch) s += values[pix * C + ch];
    return s / static_cast<Scalar>(C);
  };

  Rng rng(seed);
  const std::size_t n = classes.size();
  std::vector<std::vector<PromptPoint>> per_class(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t quota = k / n + (j < k % n ? 1 : 0);
    if (quota == 0) continue;
    std::vector<std::size_t> region;
    for (std::size_t pix = 0; pix < H * W; ++pix) {
      if (labels.ids[pix] == classes[j]) region.push_back(pix);
    }
    std::vector<Scalar> act(region.size());
    for (std::size_t i = 0; i < region.size(); ++i) act[i] = activation(region[i]);
    std::vector<std::size_t> order(region.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return act[a] > act[b]; });
    for (std::size_t q = 0; q < quota; ++q) {
      const std::size_t pick = q < order.size() ? order[q] : rng.index(region.size());
      const std::size_t pix = region[pick];
      per_class[j].push_back({pix / W, pix % W, classes[j]});
    }
  }
  for (std::size_t round = 0; ps.points.size() < k; ++round) {
    for (std::size_t j = 0; j < n; ++j) {
      if (round < per_class[j].size()) ps.points.push_back(per_class[j][round]);
    }
  }
  return ps;
}

PromptEncoder PromptEncoder::init(const SegConfig& cfg, Rng& rng) {
  if (cfg.num_classes < 2) throw ConfigError("need at least 2 classes");
  PromptEncoder p;
  p.class_embed = uniform_param({cfg.num_classes, cfg.token_dim}, Scalar(0.5), rng);
  p.corner_embed = uniform_param({2, cfg.token_dim}, Scalar(0.5), rng);
  return p;
}

Tensor PromptEncoder::operator()(const PromptSet& prompts) const {
  prompts.validate();
  const std::size_t d = class_embed.dim(1);
  const Scalar H = static_cast<Scalar>(prompts.height), W = static_cast<Scalar>(prompts.width);
  auto pe = [&](Scalar r, Scalar c) { return sinusoidal_point_encoding((r + Scalar(0.5)) / H, (c + Scalar(0.5)) / W, d); };

  std::vector<Tensor> parts;
  if (!prompts.points.empty()) {
    std::vector<Scalar> table;
    std::vector<std::size_t> ids;
    for (const PromptPoint& p : prompts.points) {
      if (p.class_id < 0 || static_cast<std::size_t>(p.class_id) >= class_embed.dim(0)) {
        throw ContractError("prompt class id " + std::to_string(p.class_id) + " out of range");
      }
      const auto e = pe(static_cast<Scalar>(p.row), static_cast<Scalar>(p.col));
      table.insert(table.end(), e.begin(), e.end());
      ids.push_back(static_cast<std::size_t>(p.class_id));
    }
    parts.push_back(Tensor::from({prompts.points.size(), d}, std::move(table)) + gather_rows(class_embed, ids));
  }
  std::vector<Scalar> corners;
  const auto c0 = pe(static_cast<Scalar>(prompts.box.row_min), static_cast<Scalar>(prompts.box.col_min));
  const auto c1 = pe(static_cast<Scalar>(prompts.box.row_max), static_cast<Scalar>(prompts.box.col_max));
  corners.insert(corners.end(), c0.begin(), c0.end());
  corners.insert(corners.end(), c1.begin(), c1.end());
  parts.push_back(Tensor::from({2, d}, std::move(corners)) + corner_embed);
  return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

void PromptEncoder::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".class_embed", class_embed, ParamGroup::generator});
  out.push_back({prefix + ".corner_embed", corner_embed, ParamGroup::generator});
}

Tensor prompt_encode(const PromptSet& prompts, const PromptEncoder& encoder) { return encoder(prompts); }

OutputTokens OutputTokens::init(const SegConfig& cfg, Rng& rng) {
  if (cfg.num_classes < 2) throw ConfigError("need at least 2 classes");
  return {uniform_param({cfg.num_classes, cfg.token_dim}, Scalar(0.5), rng)};
}

AttentionUnit AttentionUnit::init(std::size_t dim, Rng& rng) {
  return {Linear::init(dim, dim, rng, false), Linear::init(dim, dim, rng, false), Linear::init(dim, dim, rng, false),
          Linear::init(dim, dim, rng)};
}

Tensor AttentionUnit::operator()(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, AttentionTrace* trace) const {
  return proj(scaled_dot_attention(q(q_in), k(k_in), v(v_in), trace));
}

void AttentionUnit::collect(const std::string& prefix, ParamList& out) const {
  q.collect(prefix + ".q", out, ParamGroup::generator);
  k.collect(prefix + ".k", out, ParamGroup::generator);
  v.collect(prefix + ".v", out, ParamGroup::generator);
  proj.collect(prefix + ".proj", out, ParamGroup::generator);
}

TwoWayLayer TwoWayLayer::init(std::size_t dim, Rng& rng) {
  return {AttentionUnit::init(dim, rng), LayerNorm::init(dim),          AttentionUnit::init(dim, rng),
          LayerNorm::init(dim),          Linear::init(dim, 2 * dim, rng), Linear::init(2 * dim, dim, rng),
          LayerNorm::init(dim),          AttentionUnit::init(dim, rng),   LayerNorm::init(dim)};
}

void TwoWayLayer::collect(const std::string& prefix, ParamList& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  norm1.collect(prefix + ".norm1", out, ParamGroup::generator);
  token_to_image.collect(prefix + ".token_to_image", out);
  norm2.collect(prefix + ".norm2", out, ParamGroup::generator);
  mlp1.collect(prefix + ".mlp1", out, ParamGroup::generator);
  mlp2.collect(prefix + ".mlp2", out, ParamGroup::generator);
  norm3.collect(prefix + ".norm3", out, ParamGroup::generator);
  image_to_token.collect(prefix + ".image_to_token", out);
  norm4.collect(prefix + ".norm4", out, ParamGroup::generator);
}

MaskDecoder MaskDecoder::init(const SegConfig& cfg, Rng& rng) {
  if (cfg.patch < 2 || (cfg.patch & (cfg.patch - 1)) != 0) throw ConfigError("patch size must be a power of two >= 2");
  const std::size_t d = cfg.token_dim;
  MaskDecoder m;
  for (std::size_t i = 0; i < cfg.decoder_layers; ++i) m.layers.push_back(TwoWayLayer::init(d, rng));
  m.final_attn = AttentionUnit::init(d, rng);
  m.final_norm = LayerNorm::init(d);
  std::size_t in = d;
  for (std::size_t s = cfg.patch; s > 1; s /= 2) {
    const std::size_t out = s == 2 ? cfg.upscale_dim : std::max(cfg.upscale_dim, in / 2);
    m.upscale.push_back(ConvTranspose2d::init(in, out, 2, 2, 0, rng));
    in = out;
  }
  m.head1 = Linear::init(d, d, rng);
  m.head2 = Linear::init(d, d, rng);
  m.head3 = Linear::init(d, cfg.upscale_dim, rng);
  return m;
}

Tensor MaskDecoder::operator()(const Tensor& embedding, const Tensor& prompt_tokens, const OutputTokens& tokens,
                               AttentionTrace* trace) const {
  if (embedding.rank() != 3) throw DimensionError("mask_decode: expected hxwxd embedding, got " + shape_str(embedding.shape()));
  const std::size_t h = embedding.dim(0), w = embedding.dim(1), d = embedding.dim(2);
  const std::size_t num_classes = tokens.fot.dim(0);
  if (tokens.fot.dim(1) != d || head1.in_features() != d) {
    throw DimensionError("mask_decode: token width " + std::to_string(tokens.fot.dim(1)) + " vs embedding width " +
                         std::to_string(d));
  }
  Tensor queries = tokens.fot;
  if (prompt_tokens.defined()) {
    if (prompt_tokens.rank() != 2 || prompt_tokens.dim(1) != d) {
      throw DimensionError("mask_decode: prompt tokens " + shape_str(prompt_tokens.shape()) + " vs width " +
                           std::to_string(d));
    }
    queries = concat({queries, prompt_tokens}, 0);
  }
  const Tensor query_pe = queries;
  Tensor keys = grid_to_tokens(embedding);
  const Tensor key_pe = sinusoidal_grid_encoding(h, w, d);

  for (const TwoWayLayer& L : layers) {
    Tensor q = queries + query_pe;
    queries = L.norm1(queries + L.self_attn(q, q, queries, trace));
    q = queries + query_pe;
    Tensor k = keys + key_pe;
    queries = L.norm2(queries + L.token_to_image(q, k, keys, trace));
    queries = L.norm3(queries + L.mlp2(relu(L.mlp1(queries))));
    q = queries + query_pe;
    k = keys + key_pe;
    keys = L.norm4(keys + L.image_to_token(k, q, queries, trace));
  }
  queries = final_norm(queries + final_attn(queries + query_pe, keys + key_pe, keys, trace));

  Tensor up = hwc_to_nchw(reshape(keys, {h, w, d}));
  for (const ConvTranspose2d& u : upscale) up = gelu(u(up));
  const std::size_t H = up.dim(2), W = up.dim(3), U = up.dim(1);
  const Tensor pixels = reshape(up, {U, H * W});

  const Tensor class_tokens = slice(queries, 0, 0, num_classes);
  const Tensor hyper = head3(relu(head2(relu(head1(class_tokens)))));
  return reshape(matmul(hyper, pixels), {num_classes, H, W});
}

void MaskDecoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
  final_attn.collect(prefix + ".final_attn", out);
  final_norm.collect(prefix + ".final_norm", out, ParamGroup::generator);
  for (std::size_t i = 0; i < upscale.size(); ++i) upscale[i].collect(prefix + ".upscale" + std::to_string(i), out, ParamGroup::generator);
  head1.collect(prefix + ".head1", out, ParamGroup::generator);
  head2.collect(prefix + ".head2", out, ParamGroup::generator);
  head3.collect(prefix + ".head3", out, ParamGroup::generator);
}

Tensor mask_decode(const Tensor& embedding, const Tensor& prompt_tokens, const OutputTokens& fot,
                   const MaskDecoder& decoder, AttentionTrace* trace) {
  return decoder(embedding, prompt_tokens, fot, trace);
}

SegmentationMask segment(const Tensor& logits) {
  if (logits.rank() != 3) throw DimensionError("segment: expected CxHxW logits, got " + shape_str(logits.shape()));
  const std::size_t C = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  const auto v = logits.data();
  for (Scalar s : v) {
    if (std::isnan(s)) throw NumericError("segment: NaN logit");
  }
  SegmentationMask m;
  m.logits = logits;
  m.classes = LabelGrid(H, W);
  const std::size_t plane = H * W;
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (v[c * plane + p] > v[best * plane + p]) best = c;
    }
    m.classes.ids[p] = static_cast<int>(best);
  }
  return m;
}

}  // namespace fusionsam
