#pragma once

// Small configurations that keep end-to-end training tests to seconds.

#include <vector>

#include "fusionsam/data.hpp"
#include "fusionsam/training.hpp"

namespace tiny {

inline fusionsam::TrainConfig train_config(std::uint64_t seed = 0) {
  fusionsam::TrainConfig c;
  c.seed = seed;
  c.lr = 2e-3;
  c.batch_size = 2;
  c.epochs = 2;
  c.prompt_points = 4;
  c.model.num_classes = 4;
  c.model.lstg_hidden = 8;
  c.model.latent_dim = 8;
  c.model.codebook_size = 16;
  c.model.fusion_hidden = 8;
  c.model.token_dim = 8;
  c.model.encoder_blocks = 1;
  c.model.decoder_layers = 1;
  c.model.upscale_dim = 4;
  return c;
}

inline fusionsam::SynthConfig synth_config(std::uint64_t seed = 0) {
  fusionsam::SynthConfig s;
  s.image_size = 16;
  s.num_classes = 4;
  s.shapes_per_image = 2;
  s.train_count = 4;
  s.val_count = 2;
  s.test_count = 2;
  s.seed = seed;
  return s;
}

inline std::vector<fusionsam::PairedSample> samples(fusionsam::Split split, std::size_t n, std::uint64_t seed = 0) {
  std::vector<fusionsam::PairedSample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fusionsam::synth_sample(synth_config(seed), split, i));
  return out;
}

}  // namespace tiny
