#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "fusionsam/checkpoint.hpp"
#include "fusionsam/error.hpp"
#include "fusionsam/training.hpp"
#include "tiny.hpp"

using namespace fusionsam;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::filesystem::path temp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Checkpoint, ByteLayout) {
  Checkpoint ck;
  ck.put_floats("w", {2}, std::vector<Scalar>{1.0, -2.0});
  ck.put_ints("n", std::vector<std::int64_t>{258});
  const auto b = ck.serialize();
  std::vector<std::uint8_t> expect{'F', 'S', 'A', 'M', 1, 0, 0, 0, 2, 0, 0, 0};
  // "n": i64, rank 1, dim 1, 258 little-endian.
  for (std::uint8_t x : std::initializer_list<std::uint8_t>{1, 0, 'n', 2, 1, 1, 0, 0, 0, 2, 1, 0, 0, 0, 0, 0, 0}) expect.push_back(x);
  // "w": f64, rank 1, dim 2.
  for (std::uint8_t x : std::initializer_list<std::uint8_t>{1, 0, 'w', 0, 1, 2, 0, 0, 0}) expect.push_back(x);
  for (double v : {1.0, -2.0}) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) expect.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  EXPECT_EQ(b, expect);
}

TEST(Checkpoint, ParseSerializeIsExact) {
  Checkpoint ck;
  ck.put_floats("b.tensor", {2, 3}, std::vector<Scalar>{1, 2, 3, 4, 5, 6.25});
  ck.put_ints("a.counts", std::vector<std::int64_t>{-1, 0, 1LL << 40});
  ck.put_text("meta.note", "hello = world\n");
  const auto bytes = ck.serialize();
  const Checkpoint back = Checkpoint::parse(bytes);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(back.serialize(), bytes);
  Shape shape;
  EXPECT_EQ(back.get_floats("b.tensor", &shape), (std::vector<Scalar>{1, 2, 3, 4, 5, 6.25}));
  EXPECT_EQ(shape, (Shape{2, 3}));
  EXPECT_EQ(back.get_ints("a.counts")[2], 1LL << 40);
  EXPECT_EQ(back.get_text("meta.note"), "hello = world\n");
  EXPECT_THROW(back.get_floats("missing"), DataError);
  EXPECT_THROW(back.get_ints("b.tensor"), DataError);
}

TEST(Checkpoint, RejectsCorruptStreams) {
  Checkpoint ck;
  ck.put_ints("x", std::vector<std::int64_t>{1, 2});
  const auto good = ck.serialize();
  auto bad_magic = good;
  bad_magic[0] = 'G';
  EXPECT_THROW(Checkpoint::parse(bad_magic), DataError);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(Checkpoint::parse(bad_version), DataError);
  EXPECT_THROW(Checkpoint::parse(std::span(good).first(good.size() - 1)), DataError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(Checkpoint::parse(trailing), DataError);
  EXPECT_THROW(Checkpoint::load(temp("fusionsam_no_such_file.ckpt")), DataError);
}

TEST(Checkpoint, RejectsNonCanonicalOrder) {
  Checkpoint a, b;
  a.put_ints("a", std::vector<std::int64_t>{1});
  b.put_ints("b", std::vector<std::int64_t>{2});
  auto ba = a.serialize(), bb = b.serialize();
  // Splice entry "b" before entry "a" with a count of 2.
  std::vector<std::uint8_t> swapped(bb.begin(), bb.begin() + 12);
  swapped[8] = 2;
  swapped.insert(swapped.end(), bb.begin() + 12, bb.end());
  swapped.insert(swapped.end(), ba.begin() + 12, ba.end());
  EXPECT_THROW(Checkpoint::parse(swapped), DataError);
}

TEST(Checkpoint, TrainedModelSaveLoadSaveIsByteIdentical) {
  const TrainConfig cfg = tiny::train_config(11);
  TrainResult r = train(cfg, tiny::samples(Split::train, 4));
  const auto p1 = temp("fusionsam_ck1.ckpt"), p2 = temp("fusionsam_ck2.ckpt");
  r.last.save(p1);
  Checkpoint loaded = Checkpoint::load(p1);
  loaded.save(p2);
  EXPECT_EQ(read_bytes(p1), read_bytes(p2));
  EXPECT_EQ(loaded, r.last);

  // Rebuilding the model from the file and re-exporting reproduces every parameter entry.
  FusionSamModel model = model_from_checkpoint(loaded);
  const Checkpoint again = make_checkpoint(model, checkpoint_config(loaded));
  for (const auto& [name, entry] : again.entries) EXPECT_EQ(entry, loaded.entries.at(name)) << name;
  EXPECT_TRUE(loaded.contains("lstg.codebook.entries"));
  EXPECT_TRUE(loaded.contains("lstg.codebook.usage"));
  EXPECT_TRUE(loaded.contains("adam.generator.step"));
  EXPECT_TRUE(loaded.contains("adam.discriminator.step"));
  EXPECT_TRUE(loaded.contains("meta.rng"));
  EXPECT_TRUE(loaded.contains("meta.config"));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(Checkpoint, ShapeMismatchOnLoad) {
  TrainConfig cfg = tiny::train_config();
  const Checkpoint ck = make_checkpoint(FusionSamModel(cfg.model_config()), cfg);
  cfg.model.latent_dim = 12;
  FusionSamModel other(cfg.model_config());
  EXPECT_THROW(load_parameters(ck, other), ConfigError);
}

TEST(Checkpoint, AdamMomentsMatchParameterShapes) {
  const TrainConfig cfg = tiny::train_config(12);
  TrainResult r = train(cfg, tiny::samples(Split::train, 2));
  std::size_t moments = 0;
  for (const auto& [name, entry] : r.last.entries) {
    for (const std::string prefix : {"adam.generator.m.", "adam.generator.v.", "adam.discriminator.m."}) {
      if (name.rfind(prefix, 0) != 0) continue;
      ++moments;
      EXPECT_EQ(entry.dims, r.last.entries.at(name.substr(prefix.size())).dims) << name;
    }
  }
  EXPECT_GT(moments, 0u);
  EXPECT_EQ(r.last.get_ints("adam.generator.step")[0], 2);
}
