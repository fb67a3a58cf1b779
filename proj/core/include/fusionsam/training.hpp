#pragma once

// Joint fusion + segmentation training, inference and evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fusionsam/checkpoint.hpp"
#include "fusionsam/data.hpp"
#include "fusionsam/lstg.hpp"
#include "fusionsam/metrics.hpp"
#include "fusionsam/model.hpp"
#include "fusionsam/random.hpp"

namespace fusionsam {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-3;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  std::size_t max_steps = 0;  // 0: no cap beyond `epochs`
  std::uint64_t seed = 0;
  LossWeights weights;
  double lambda_seg = 1.0;
  Variant variant = Variant::full;
  std::size_t eval_every = 1;  // epochs between validation passes
  bool include_background = false;
  std::size_t prompt_points = 10;
  double prompt_dropout = 0.5;  // chance a training sample is decoded without prompts
  bool self_prompt = true;      // inference refines with prompts sampled from its own first pass
  bool reseed_dead_codes = true;
  ModelConfig model;            // variant and init_seed are taken from the fields above

  void validate() const;
  ModelConfig model_config() const;
};

/// Every config key, in the order config_to_text writes them.
std::vector<std::string> config_keys();
/// Returns false for an unknown key; throws ConfigError for a malformed value.
bool set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string config_to_text(const TrainConfig& cfg);
/// Strict: unknown keys and malformed lines throw ConfigError.
TrainConfig config_from_text(const std::string& text);
/// `key = value` lines; '#' starts a comment; blank lines are skipped.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                 const std::string& source = "config");

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<Scalar>> m, v;
};

/// Bias-corrected Adam with decoupled weight decay over every parameter that
/// requires a gradient; frozen entries are skipped.
void adam_step(const ParamList& params, AdamState& state, const AdamConfig& cfg);

struct JointLoss {
  Tensor fusion;  // generator objective of the fusion stage
  Tensor seg;     // mean per-pixel cross-entropy
  Tensor total;
};

JointLoss joint_loss(const Tensor& fusion_objective, const Tensor& logits, const LabelGrid& labels, double lambda_seg);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double rec = 0, commit = 0, perc = 0, adv_g = 0, adv_d = 0, seg = 0, total_g = 0, joint = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;  // steps completed so far
  double rec = 0, commit = 0, perc = 0, adv_g = 0, adv_d = 0, seg = 0, total_g = 0, joint = 0;
  double val_miou = 0;   // NaN when no validation ran this epoch
  std::size_t reseeded = 0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochLog& log, Variant variant);

struct TrainResult {
  Checkpoint last;
  Checkpoint best;  // highest validation mIoU; equals `last` without a validation set
  double best_val_miou = 0;
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
  std::size_t steps_done = 0;
  std::optional<std::string> divergence;  // set when training stopped on a non-finite loss
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

/// Alternating generator / discriminator steps. On a non-finite loss the run
/// stops and `last` holds the last good (end of epoch) state.
TrainResult train(const TrainConfig& cfg, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& val_set = {}, const TrainHooks& hooks = {});

/// Parameters, codebook usage, config text and optional optimizer / rng state.
Checkpoint make_checkpoint(const FusionSamModel& model, const TrainConfig& cfg, const AdamState* gen = nullptr,
                           const AdamState* disc = nullptr, const Rng* rng = nullptr);
void load_parameters(const Checkpoint& ck, FusionSamModel& model);
TrainConfig checkpoint_config(const Checkpoint& ck);
FusionSamModel model_from_checkpoint(const Checkpoint& ck);

struct InferOptions {
  bool self_prompt = true;
  std::size_t prompt_points = 10;
  std::uint64_t seed = 0;
};

struct Inference {
  FusionMask fusion;
  SegmentationMask mask;
};

/// Prompt-free pass, then (optionally) one pass prompted from its own prediction.
Inference infer(FusionSamModel& model, const Tensor& vis, const Tensor& ir, const InferOptions& opts = {});

struct EvalOptions {
  bool include_background = false;
  bool self_prompt = true;
  std::size_t prompt_points = 10;
  std::size_t num_classes = 0;  // 0: accept the model's class count
};

struct EvalResult {
  IouReport report;
  ConfusionMatrix confusion{2};
  std::vector<LabelGrid> predictions;
};

EvalResult evaluate(FusionSamModel& model, const std::vector<PairedSample>& samples, const EvalOptions& opts = {});
EvalResult evaluate(const Checkpoint& ck, const std::vector<PairedSample>& samples, const EvalOptions& opts = {});

}  // namespace fusionsam
