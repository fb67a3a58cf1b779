#include "fusionsam/gradient_suite.hpp"

#include <functional>

#include "fusionsam/error.hpp"
#include "fusionsam/fmp.hpp"
#include "fusionsam/lstg.hpp"
#include "fusionsam/nn.hpp"
#include "fusionsam/ops.hpp"
#include "fusionsam/random.hpp"
#include "fusionsam/segmentation.hpp"

namespace fusionsam {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<Scalar> v(shape_numel(shape));
  for (Scalar& x : v) x = static_cast<Scalar>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero, for ops with a kink there.
Tensor kink_free(Shape shape, Rng& rng) {
  std::vector<Scalar> v(shape_numel(shape));
  for (Scalar& x : v) {
    const double m = rng.uniform(0.1, 1.0);
    x = static_cast<Scalar>(rng.uniform() < 0.5 ? -m : m);
  }
  return Tensor::from(std::move(shape), std::move(v));
}

// sum(y * r) with r fixed per (shape, seed), so every output coordinate gets
// a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

struct Case {
  std::string name;
  std::function<Tensor()> f;
  std::vector<Tensor> wrt;
};

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  Rng rng(2024);
  auto add_case = [&](std::string name, std::function<Tensor()> f, std::vector<Tensor> wrt) {
    cases.push_back({std::move(name), std::move(f), std::move(wrt)});
  };

  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    add_case("add", [=] { return probe(add(a, b)); }, {a, b});
    add_case("sub", [=] { return probe(sub(a, b)); }, {a, b});
    add_case("mul", [=] { return probe(mul(a, b)); }, {a, b});
    add_case("scale", [=] { return probe(scale(a, Scalar(-1.7))); }, {a});
    add_case("add_scalar", [=] { return probe(add_scalar(a, Scalar(0.3))); }, {a});
    add_case("square", [=] { return probe(square(a)); }, {a});
    add_case("sum", [=] { return scale(sum(mul(a, b)), Scalar(0.5)); }, {a, b});
    add_case("mean", [=] { return mean(mul(a, a)); }, {a});
    add_case("sum_squares", [=] { return sum_squares(a); }, {a});
    add_case("reshape", [=] { return probe(reshape(a, {2, 6})); }, {a});
    add_case("transpose", [=] { return probe(transpose(a)); }, {a});
    Tensor s = Tensor::from({1}, {Scalar(0.8)});
    add_case("scale_by", [=] { return probe(scale_by(a, s)); }, {a, s});
    Tensor bias = random_tensor({4}, rng);
    add_case("add_bias", [=] { return probe(add_bias(a, bias)); }, {a, bias});
  }
  {
    Tensor k = kink_free({4, 5}, rng);
    add_case("relu", [=] { return probe(relu(k)); }, {k});
    add_case("leaky_relu", [=] { return probe(leaky_relu(k, Scalar(0.2))); }, {k});
    Tensor x = random_tensor({4, 5}, rng, -3, 3);
    add_case("gelu", [=] { return probe(gelu(x)); }, {x});
    add_case("sigmoid", [=] { return probe(sigmoid(x)); }, {x});
    add_case("softplus", [=] { return probe(softplus(x)); }, {x});
    add_case("softmax_axis0", [=] { return probe(softmax(x, 0)); }, {x});
    add_case("softmax_axis1", [=] { return probe(softmax(x, 1)); }, {x});
    Tensor g = random_tensor({5}, rng, 0.5, 1.5), b = random_tensor({5}, rng);
    add_case("layer_norm", [=] { return probe(layer_norm(x, g, b, Scalar(1e-5))); }, {x, g, b});
  }
  {
    Tensor x = random_tensor({2, 3, 4}, rng);
    add_case("permute", [=] { return probe(permute(x, {2, 0, 1})); }, {x});
    add_case("slice", [=] { return probe(slice(x, 2, 1, 3)); }, {x});
    Tensor y = random_tensor({2, 3, 2}, rng);
    add_case("concat", [=] { return probe(concat({x, y}, 2)); }, {x, y});
    Tensor table = random_tensor({5, 3}, rng);
    add_case("gather_rows", [=] {
      const std::size_t rows[] = {4, 0, 4, 2};
      return probe(gather_rows(table, rows));
    }, {table});
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    add_case("matmul", [=] { return probe(matmul(a, b)); }, {a, b});
  }
  {
    Tensor x = random_tensor({1, 2, 6, 6}, rng);
    Tensor w = random_tensor({3, 2, 4, 4}, rng, -0.5, 0.5), b = random_tensor({3}, rng);
    add_case("conv2d", [=] { return probe(conv2d(x, w, b, 2, 1)); }, {x, w, b});
    Tensor w3 = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    add_case("conv2d_3x3", [=] { return probe(conv2d(x, w3, b, 1, 1)); }, {x, w3, b});
    Tensor xt = random_tensor({1, 3, 3, 3}, rng);
    Tensor wt = random_tensor({3, 2, 4, 4}, rng, -0.5, 0.5), bt = random_tensor({2}, rng);
    add_case("conv_transpose2d", [=] { return probe(conv_transpose2d(xt, wt, bt, 2, 1)); }, {xt, wt, bt});
    add_case("avg_pool2d", [=] { return probe(avg_pool2d(x, 2)); }, {x});
  }
  {
    Tensor logits = random_tensor({4, 3, 3}, rng, -2, 2);
    add_case("cross_entropy", [=] {
      const int labels[] = {0, 1, 2, 3, 0, 1, 3, 3, 2};
      return cross_entropy(logits, labels);
    }, {logits});
    Tensor q = random_tensor({5, 4}, rng), k = random_tensor({6, 4}, rng), v = random_tensor({6, 3}, rng);
    add_case("scaled_dot_attention", [=] { return probe(scaled_dot_attention(q, k, v, nullptr)); }, {q, k, v});
  }

  // LSTG encoder and decoder, chained on the pre-quantization latent.
  {
    const LstgConfig lc{3, 4, 6, 8};
    auto enc = std::make_shared<Encoder>(Encoder::init(lc, rng));
    auto dec = std::make_shared<Decoder>(Decoder::init(lc, rng));
    Tensor img = random_tensor({8, 8, 3}, rng, 0, 1);
    std::vector<Tensor> wrt = {img};
    for (const Conv2d& c : enc->down) wrt.insert(wrt.end(), {c.weight, c.bias});
    wrt.insert(wrt.end(), {enc->head.weight, enc->head.bias, dec->stem.weight, dec->stem.bias});
    for (const ConvTranspose2d& c : dec->up) wrt.insert(wrt.end(), {c.weight, c.bias});
    add_case("lstg.encoder_decoder", [=] { return probe((*dec)((*enc)(img))); }, wrt);

    // Objective terms with the token choice held fixed. Each case lists only
    // tensors whose path avoids stop-gradient and the straight-through copy.
    auto cb = std::make_shared<Codebook>(Codebook::init(16, 8, rng));
    auto disc = std::make_shared<Discriminator>(Discriminator::init(3, rng));
    auto perc = std::make_shared<PerceptualNet>(PerceptualNet::init(3, rng));
    auto parts_of = [=](const LossWeights& w) {
      const LatentTokens t = quantize((*enc)(img), *cb, false);
      const Tensor recon = decode(t, *dec);
      const ModalityTerms terms[1] = {{img, recon, t.pre_quant, t.quantized, disc.get(), perc.get()}};
      return lstg_loss(terms, w);
    };
    add_case("lstg.loss_generator", [=] { return parts_of(LossWeights{}).total_g; },
             {dec->stem.weight, dec->up.back().weight, disc->layers[0].weight, disc->layers[2].bias});
    add_case("lstg.loss_discriminator", [=] { return parts_of(LossWeights{}).adv_d; },
             {disc->layers[0].weight, disc->layers[1].bias, disc->layers[2].weight});
    add_case("lstg.commit_codebook", [=] {
      LossWeights w;
      w.commit_beta = 0;
      return parts_of(w).commit;
    }, {cb->entries});
    add_case("lstg.commit_encoder", [=] {
      const Tensor z = (*enc)(img);
      const LatentTokens t = quantize(z, *cb, false);
      return sum_squares(stop_gradient(t.quantized) - z);
    }, {enc->head.weight, enc->down[0].weight, img});
  }

  // FMP: cross-domain attention, complementary fusion and the fusion head.
  for (bool ffn : {false, true}) {
    FmpConfig fc;
    fc.latent_dim = 8;
    fc.feed_forward = ffn;
    fc.scale = 2;
    fc.fusion_hidden = 6;
    auto cross = std::make_shared<CrossDomainParams>(CrossDomainParams::init(fc, rng));
    auto comp = std::make_shared<ComplementaryParams>(ComplementaryParams::init(fc, rng));
    auto head = std::make_shared<FusionHead>(FusionHead::init(fc, rng));
    Tensor t1 = random_tensor({9, 8}, rng), t2 = random_tensor({9, 8}, rng);
    std::vector<Tensor> wrt = {t1, t2, cross->q1.weight, cross->k2.weight, cross->v2.weight, cross->fuse.bias, cross->norm1.gamma,
                               cross->fuse.weight, comp->q_diff.weight, comp->k_pair.weight, comp->v_0.weight,
                               comp->norm_f.beta, head->up.back().weight};
    if (ffn) wrt.push_back(cross->ffn1->fc1.weight);
    add_case(ffn ? "fmp.block_ffn" : "fmp.block", [=] {
      const Tensor zc = cross_domain_fuse(t1, t2, *cross);
      const Tensor zf = complementary_fuse(t1, t2, zc, *comp);
      return probe(fusion_mask(reshape(zf, {3, 3, 8}), *head).map);
    }, wrt);
    if (!ffn) {
      auto mix = std::make_shared<ConcatParams>(ConcatParams::init(fc, rng));
      add_case("fmp.concat", [=] { return probe(concat_fuse(t1, t2, *mix)); }, {t1, t2, mix->mix.weight});
    }
  }

  // Segmentation: frozen encoder (input path), prompt encoder, mask decoder.
  {
    SegConfig sc;
    sc.num_classes = 3;
    sc.token_dim = 8;
    sc.encoder_blocks = 1;
    sc.upscale_dim = 4;
    auto ienc = std::make_shared<ImageEncoder>(ImageEncoder::init(sc, rng));
    Tensor fmap = random_tensor({8, 8, 3}, rng, 0, 1);
    add_case("seg.image_encoder", [=] { return probe((*ienc)(fmap)); },
             {fmap, ienc->patch_embed.weight, ienc->blocks[0].fc1.weight});

    auto penc = std::make_shared<PromptEncoder>(PromptEncoder::init(sc, rng));
    PromptSet ps;
    ps.height = ps.width = 8;
    ps.points = {{1, 2, 1}, {5, 6, 2}, {3, 3, 1}};
    ps.box = {1, 2, 6, 6};
    add_case("seg.prompt_encoder", [=] { return probe((*penc)(ps)); }, {penc->class_embed, penc->corner_embed});

    auto dec = std::make_shared<MaskDecoder>(MaskDecoder::init(sc, rng));
    auto fot = std::make_shared<OutputTokens>(OutputTokens::init(sc, rng));
    Tensor emb = random_tensor({2, 2, 8}, rng);
    Tensor prompts = random_tensor({5, 8}, rng);
    std::vector<Tensor> wrt = {emb, prompts, fot->fot, dec->layers[0].self_attn.q.weight,
                               dec->layers[0].token_to_image.v.weight, dec->layers[0].image_to_token.k.weight,
                               dec->layers.back().mlp1.weight, dec->final_attn.proj.weight,
                               dec->upscale[0].weight, dec->head3.weight};
    add_case("seg.mask_decoder", [=] { return sum(mask_decode(emb, prompts, *fot, *dec)); }, wrt);
    add_case("seg.mask_decoder_probe", [=] { return probe(mask_decode(emb, prompts, *fot, *dec)); }, wrt);
    add_case("seg.mask_decoder_no_prompt", [=] { return probe(mask_decode(emb, Tensor(), *fot, *dec)); },
             {emb, fot->fot, dec->head1.weight});
  }
  return cases;
}

}  // namespace

std::vector<GradCaseResult> run_gradient_suite(double tolerance, std::size_t max_coords_per_tensor) {
  std::vector<GradCaseResult> out;
  GradCheckOptions opts;
  opts.max_coords_per_tensor = max_coords_per_tensor;
  for (Case& c : build_cases()) {
    GradCaseResult r;
    r.name = c.name;
    r.tolerance = tolerance;
    try {
      r.report = grad_check(c.f, c.wrt, opts);
    } catch (const Error& e) {
      throw ContractError("gradient case " + c.name + ": " + e.what());
    }
    r.passed = r.report.max_rel_err <= tolerance;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fusionsam
