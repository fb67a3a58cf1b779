#include <gtest/gtest.h>

#include <cmath>

#include "fusionsam/error.hpp"
#include "fusionsam/grad_check.hpp"
#include "fusionsam/model.hpp"
#include "fusionsam/segmentation.hpp"
#include "fusionsam/training.hpp"
#include "oracles.hpp"

using namespace fusionsam;

namespace {

SegConfig small_seg() {
  SegConfig c;
  c.num_classes = 4;
  c.token_dim = 16;
  c.encoder_blocks = 2;
  c.decoder_layers = 2;
  c.upscale_dim = 8;
  return c;
}

FusionMask fusion_of(Tensor map) { return {std::move(map), Tensor()}; }

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(ImageEncoder, PatchArithmetic) {
  Rng rng(1);
  ImageEncoder enc = ImageEncoder::init(small_seg(), rng);
  Tensor x = oracle::random({16, 16, 3}, rng, 0, 1);
  Tensor e = image_encode(fusion_of(x), enc);
  EXPECT_EQ(e.shape(), (Shape{4, 4, 16}));
  EXPECT_EQ(vec(e), vec(image_encode(fusion_of(x), enc)));
  EXPECT_EQ(enc(oracle::random({8, 12, 3}, rng)).shape(), (Shape{2, 3, 16}));
  EXPECT_THROW(enc(Tensor::zeros({10, 16, 3})), DimensionError);
}

TEST(ImageEncoder, FrozenButPassesGradient) {
  Rng rng(2);
  ImageEncoder enc = ImageEncoder::init(small_seg(), rng);
  ParamList ps;
  enc.collect("enc", ps);
  ASSERT_FALSE(ps.empty());
  for (auto& p : ps) {
    EXPECT_EQ(p.group, ParamGroup::frozen);
    EXPECT_FALSE(p.tensor.requires_grad());
  }
  Tensor x = oracle::random({8, 8, 3}, rng, 0, 1);
  x.set_requires_grad(true);
  sum(square(enc(x))).backward();
  ASSERT_TRUE(x.has_grad());
  double mag = 0;
  for (Scalar g : x.grad()) mag += std::abs(g);
  EXPECT_GT(mag, 0.0);
  for (auto& p : ps) EXPECT_FALSE(p.tensor.has_grad());
}

TEST(ImageEncoder, AbsentFromOptimizerState) {
  TrainConfig cfg;
  cfg.model.num_classes = 3;
  cfg.model.latent_dim = 8;
  cfg.model.codebook_size = 8;
  cfg.model.lstg_hidden = 4;
  cfg.model.token_dim = 8;
  cfg.model.fusion_hidden = 4;
  FusionSamModel model(cfg.model_config());
  ParamList params = model.parameters();
  for (auto& p : params) {
    if (p.group == ParamGroup::frozen) continue;
    p.tensor.zero_grad();
  }
  AdamState state;
  adam_step(params, state, {1e-3, 0.0});
  std::size_t encoder_params = 0;
  for (auto& p : params) {
    if (p.name.rfind("seg.image_encoder", 0) == 0) {
      ++encoder_params;
      EXPECT_EQ(state.m.count(p.name), 0u) << p.name;
      EXPECT_EQ(state.v.count(p.name), 0u) << p.name;
    }
  }
  EXPECT_GT(encoder_params, 0u);
  EXPECT_FALSE(state.m.empty());
}

TEST(SamplePrompts, SquareBoxIsExactBounds) {
  LabelGrid labels(12, 12);
  for (std::size_t r = 3; r < 7; ++r)
    for (std::size_t c = 5; c < 9; ++c) labels.at(r, c) = 2;
  PromptSet ps = sample_prompts(fusion_of(Tensor::zeros({12, 12, 3})), labels, 10, 0);
  EXPECT_FALSE(ps.fallback);
  EXPECT_EQ(ps.box.row_min, 3u);
  EXPECT_EQ(ps.box.row_max, 6u);
  EXPECT_EQ(ps.box.col_min, 5u);
  EXPECT_EQ(ps.box.col_max, 8u);
  EXPECT_EQ(ps.points.size(), 10u);
  for (auto& p : ps.points) {
    EXPECT_EQ(p.class_id, 2);
    EXPECT_EQ(labels.at(p.row, p.col), 2);
  }
}

TEST(SamplePrompts, RoundRobinSplitsEvenly) {
  LabelGrid labels(8, 8);
  for (std::size_t c = 0; c < 8; ++c) {
    labels.at(1, c) = 1;
    labels.at(6, c) = 3;
  }
  Rng rng(3);
  PromptSet ps = sample_prompts(fusion_of(oracle::random({8, 8, 3}, rng, 0, 1)), labels, 10, 0);
  int count1 = 0, count3 = 0;
  for (auto& p : ps.points) {
    count1 += p.class_id == 1;
    count3 += p.class_id == 3;
    EXPECT_EQ(labels.at(p.row, p.col), p.class_id);
  }
  EXPECT_EQ(count1, 5);
  EXPECT_EQ(count3, 5);
  EXPECT_EQ(ps.box.row_min, 1u);
  EXPECT_EQ(ps.box.row_max, 6u);
}

TEST(SamplePrompts, SinglePointIsArgmaxActivation) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    LabelGrid labels(10, 10);
    for (auto& id : labels.ids) id = rng.uniform() < 0.3 ? 2 : 0;
    labels.ids[rng.index(100)] = 2;
    Tensor map = oracle::random({10, 10, 3}, rng, 0, 1);
    if (trial % 4 == 0) map = Tensor::full({10, 10, 3}, 0.5);  // all tied: row-major first
    PromptSet ps = sample_prompts(fusion_of(map), labels, 1, 7);
    ASSERT_EQ(ps.points.size(), 1u);
    std::size_t best = 0;
    double best_v = -1;
    for (std::size_t p = 0; p < 100; ++p) {
      if (labels.ids[p] != 2) continue;
      const double v = (map.data()[p * 3] + map.data()[p * 3 + 1] + map.data()[p * 3 + 2]) / 3;
      if (v > best_v) {
        best_v = v;
        best = p;
      }
    }
    EXPECT_EQ(ps.points[0].row * 10 + ps.points[0].col, best);
  }
}

TEST(SamplePrompts, FallbackWithoutForeground) {
  PromptSet ps = sample_prompts(fusion_of(Tensor::zeros({8, 6, 3})), LabelGrid(8, 6), 10, 0);
  EXPECT_TRUE(ps.fallback);
  ASSERT_EQ(ps.points.size(), 1u);
  EXPECT_EQ(ps.points[0].row, 4u);
  EXPECT_EQ(ps.points[0].col, 3u);
  EXPECT_EQ(ps.box.row_min, 0u);
  EXPECT_EQ(ps.box.col_max, 5u);
  EXPECT_EQ(ps.box.row_max, 7u);
}

TEST(SamplePrompts, DeterministicAndInBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    LabelGrid labels(9, 7);
    for (auto& id : labels.ids) id = static_cast<int>(rng.index(4));
    Tensor map = oracle::random({9, 7, 3}, rng, 0, 1);
    PromptSet a = sample_prompts(fusion_of(map), labels, 10, 42);
    PromptSet b = sample_prompts(fusion_of(map), labels, 10, 42);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      EXPECT_EQ(a.points[i].row, b.points[i].row);
      EXPECT_EQ(a.points[i].col, b.points[i].col);
      EXPECT_LT(a.points[i].row, 9u);
      EXPECT_LT(a.points[i].col, 7u);
    }
    EXPECT_LE(a.box.row_min, a.box.row_max);
    EXPECT_LE(a.box.col_min, a.box.col_max);
    EXPECT_NO_THROW(a.validate());
  }
}

TEST(SamplePrompts, SmallRegionSamplesWithReplacement) {
  LabelGrid labels(6, 6);
  labels.at(2, 2) = 1;
  labels.at(2, 3) = 1;
  PromptSet ps = sample_prompts(fusion_of(Tensor::zeros({6, 6, 3})), labels, 5, 1);
  EXPECT_EQ(ps.points.size(), 5u);
  for (auto& p : ps.points) EXPECT_EQ(labels.at(p.row, p.col), 1);
}

TEST(PromptEncoder, TokenCountAndDeterminism) {
  Rng rng(6);
  PromptEncoder enc = PromptEncoder::init(small_seg(), rng);
  LabelGrid labels(16, 16);
  for (std::size_t r = 4; r < 12; ++r) labels.at(r, 7) = 1;
  for (std::size_t k : {1u, 3u, 10u}) {
    PromptSet ps = sample_prompts(fusion_of(oracle::random({16, 16, 3}, rng, 0, 1)), labels, k, 0);
    Tensor t = prompt_encode(ps, enc);
    EXPECT_EQ(t.shape(), (Shape{k + 2, 16}));
    EXPECT_EQ(vec(t), vec(prompt_encode(ps, enc)));
  }
}

TEST(PromptEncoder, ShiftingOnePointChangesOnlyItsToken) {
  Rng rng(7);
  PromptEncoder enc = PromptEncoder::init(small_seg(), rng);
  PromptSet ps;
  ps.height = ps.width = 16;
  ps.points = {{2, 3, 1}, {8, 8, 2}, {12, 5, 1}};
  ps.box = {2, 3, 12, 8};
  Tensor a = enc(ps);
  ps.points[1].col += 1;
  Tensor b = enc(ps);
  for (std::size_t r = 0; r < 5; ++r) {
    bool same = true;
    for (std::size_t j = 0; j < 16; ++j) same = same && a.at({r, j}) == b.at({r, j});
    EXPECT_EQ(same, r != 1) << "row " << r;
  }
}

TEST(PromptEncoder, OutOfBoundsIsContractError) {
  Rng rng(8);
  PromptEncoder enc = PromptEncoder::init(small_seg(), rng);
  PromptSet ps;
  ps.height = ps.width = 8;
  ps.points = {{8, 0, 1}};
  ps.box = {0, 0, 7, 7};
  EXPECT_THROW(enc(ps), ContractError);
  ps.points = {{1, 1, 1}};
  ps.box = {0, 0, 8, 7};
  EXPECT_THROW(enc(ps), ContractError);
  ps.box = {5, 0, 4, 7};
  EXPECT_THROW(enc(ps), ContractError);
}

class DecoderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(9);
    cfg = small_seg();
    image_encoder = ImageEncoder::init(cfg, rng);
    prompt_encoder = PromptEncoder::init(cfg, rng);
    fot = OutputTokens::init(cfg, rng);
    decoder = MaskDecoder::init(cfg, rng);
  }
  SegConfig cfg;
  ImageEncoder image_encoder;
  PromptEncoder prompt_encoder;
  OutputTokens fot;
  MaskDecoder decoder;
};

TEST_F(DecoderTest, LogitsMatchInputResolution) {
  Rng rng(10);
  for (auto [h, w] : {std::pair{16u, 16u}, std::pair{8u, 12u}}) {
    Tensor emb = image_encoder(oracle::random({h, w, 3}, rng, 0, 1));
    EXPECT_EQ(mask_decode(emb, Tensor(), fot, decoder).shape(), (Shape{4, h, w}));
    PromptSet ps;
    ps.height = h;
    ps.width = w;
    ps.points = {{1, 1, 1}, {2, 2, 3}};
    ps.box = {0, 0, h - 1, w - 1};
    EXPECT_EQ(mask_decode(emb, prompt_encoder(ps), fot, decoder).shape(), (Shape{4, h, w}));
  }
}

TEST_F(DecoderTest, ZeroHeadGivesClassZero) {
  for (Scalar& v : decoder.head3.weight.mutable_data()) v = 0;
  for (Scalar& v : decoder.head3.bias.mutable_data()) v = 0;
  Rng rng(11);
  Tensor logits = mask_decode(image_encoder(oracle::random({16, 16, 3}, rng, 0, 1)), Tensor(), fot, decoder);
  for (Scalar v : logits.data()) EXPECT_EQ(v, 0.0);
  SegmentationMask m = segment(logits);
  for (int id : m.classes.ids) EXPECT_EQ(id, 0);
}

TEST_F(DecoderTest, AttentionMapsAreStochastic) {
  Rng rng(12);
  AttentionTrace trace;
  PromptSet ps;
  ps.height = ps.width = 8;
  ps.points = {{1, 2, 1}};
  ps.box = {1, 2, 5, 6};
  mask_decode(image_encoder(oracle::random({8, 8, 3}, rng, 0, 1)), prompt_encoder(ps), fot, decoder, &trace);
  EXPECT_EQ(trace.size(), 3 * cfg.decoder_layers + 1);
  for (const Tensor& w : trace)
    for (std::size_t r = 0; r < w.dim(0); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < w.dim(1); ++c) s += w.at({r, c});
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST_F(DecoderTest, GradCheckEightByEight) {
  Rng rng(13);
  Tensor emb = image_encoder(oracle::random({8, 8, 3}, rng, 0, 1));
  PromptSet ps;
  ps.height = ps.width = 8;
  ps.points = {{1, 2, 1}, {6, 6, 2}};
  ps.box = {1, 2, 6, 6};
  ParamList params;
  decoder.collect("dec", params);
  std::vector<Tensor> wrt{emb, fot.fot, prompt_encoder.class_embed};
  for (auto& p : params) wrt.push_back(p.tensor);
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 6;
  auto f = [&] { return sum(mask_decode(emb, prompt_encoder(ps), fot, decoder)); };
  EXPECT_LE(grad_check(f, wrt, opt).max_rel_err, 1e-4);
}

TEST_F(DecoderTest, WidthMismatch) {
  EXPECT_THROW(mask_decode(Tensor::zeros({2, 2, 8}), Tensor(), fot, decoder), DimensionError);
  EXPECT_THROW(mask_decode(Tensor::zeros({2, 2, 16}), Tensor::zeros({3, 8}), fot, decoder), DimensionError);
}

TEST(Segment, Examples) {
  Tensor onehot = Tensor::zeros({3, 2, 2});
  for (std::size_t p = 0; p < 4; ++p) onehot.mutable_data()[2 * 4 + p] = 1;
  for (int id : segment(onehot).classes.ids) EXPECT_EQ(id, 2);
  for (int id : segment(Tensor::full({3, 2, 2}, 0.7)).classes.ids) EXPECT_EQ(id, 0);
  Tensor nan = Tensor::zeros({2, 2, 2});
  nan.mutable_data()[5] = std::nan("");
  EXPECT_THROW(segment(nan), NumericError);
}

TEST(Segment, MatchesArgmaxScanOracle) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = oracle::random({5, 6, 7}, rng);
    // Quantize a few values so ties occur.
    for (Scalar& v : logits.mutable_data()) v = std::round(v * 2) / 2;
    SegmentationMask m = segment(logits);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 7; ++c) {
        int best = 0;
        for (int k = 1; k < 5; ++k)
          if (logits.at({std::size_t(k), r, c}) > logits.at({std::size_t(best), r, c})) best = k;
        EXPECT_EQ(m.classes.at(r, c), best);
      }
  }
}

TEST(Segment, ArgmaxInvariances) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = oracle::random({4, 5, 5}, rng);
    const LabelGrid base = segment(logits).classes;
    Tensor shifted = logits.clone(), mono = logits.clone();
    auto s = shifted.mutable_data();
    for (std::size_t p = 0; p < 25; ++p) {
      const double k = rng.uniform(-100, 100);
      for (std::size_t c = 0; c < 4; ++c) s[c * 25 + p] += k;
    }
    for (Scalar& v : mono.mutable_data()) v = std::exp(3 * v) + std::atan(v);
    EXPECT_EQ(segment(shifted).classes, base);
    EXPECT_EQ(segment(mono).classes, base);
  }
}
