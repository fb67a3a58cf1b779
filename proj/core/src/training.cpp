#include "fusionsam/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "fusionsam/error.hpp"
#include "fusionsam/ops.hpp"

namespace fusionsam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

struct Field {
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* name, T TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member, name](TrainConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_uint(name, v)); }};
}

template <typename T>
Field model_size_field(const char* name, T ModelConfig::*member) {
  return {name, [member](const TrainConfig& c) { return std::to_string(c.model.*member); },
          [member, name](TrainConfig& c, const std::string& v) {
            c.model.*member = static_cast<T>(parse_uint(name, v));
          }};
}

Field model_bool_field(const char* name, bool ModelConfig::*member) {
  return {name, [member](const TrainConfig& c) { return std::string(c.model.*member ? "true" : "false"); },
          [member, name](TrainConfig& c, const std::string& v) { c.model.*member = parse_bool(name, v); }};
}

Field double_field(const char* name, double TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return fmt_double(c.*member); },
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_double(name, v); }};
}

Field weight_field(const char* name, double LossWeights::*member) {
  return {name, [member](const TrainConfig& c) { return fmt_double(c.weights.*member); },
          [member, name](TrainConfig& c, const std::string& v) { c.weights.*member = parse_double(name, v); }};
}

Field bool_field(const char* name, bool TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_bool(name, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      double_field("lr", &TrainConfig::lr),
      double_field("weight_decay", &TrainConfig::weight_decay),
      size_field("batch_size", &TrainConfig::batch_size),
      size_field("epochs", &TrainConfig::epochs),
      size_field("max_steps", &TrainConfig::max_steps),
      size_field("seed", &TrainConfig::seed),
      weight_field("alpha", &LossWeights::alpha),
      weight_field("commit_beta", &LossWeights::commit_beta),
      weight_field("adv_beta", &LossWeights::adv_beta),
      weight_field("gamma", &LossWeights::gamma),
      double_field("lambda_seg", &TrainConfig::lambda_seg),
      {"variant", [](const TrainConfig& c) { return to_string(c.variant); },
       [](TrainConfig& c, const std::string& v) { c.variant = parse_variant(v); }},
      size_field("eval_every", &TrainConfig::eval_every),
      bool_field("include_background", &TrainConfig::include_background),
      size_field("prompt_points", &TrainConfig::prompt_points),
      double_field("prompt_dropout", &TrainConfig::prompt_dropout),
      bool_field("self_prompt", &TrainConfig::self_prompt),
      bool_field("reseed_dead_codes", &TrainConfig::reseed_dead_codes),
      model_size_field("num_classes", &ModelConfig::num_classes),
      model_size_field("scale", &ModelConfig::scale),
      model_size_field("lstg_hidden", &ModelConfig::lstg_hidden),
      model_size_field("latent_dim", &ModelConfig::latent_dim),
      model_size_field("codebook_size", &ModelConfig::codebook_size),
      model_bool_field("shared_codebook", &ModelConfig::shared_codebook),
      model_size_field("key_dim", &ModelConfig::key_dim),
      model_bool_field("fmp_feed_forward", &ModelConfig::fmp_feed_forward),
      model_bool_field("fmp_positional", &ModelConfig::fmp_positional),
      model_size_field("fusion_channels", &ModelConfig::fusion_channels),
      model_size_field("fusion_hidden", &ModelConfig::fusion_hidden),
      model_size_field("patch", &ModelConfig::patch),
      model_size_field("token_dim", &ModelConfig::token_dim),
      model_size_field("encoder_blocks", &ModelConfig::encoder_blocks),
      model_size_field("decoder_layers", &ModelConfig::decoder_layers),
      model_size_field("upscale_dim", &ModelConfig::upscale_dim),
  };
  return table;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

ParamList select(const ParamList& all, ParamGroup group) {
  ParamList out;
  for (const NamedParam& p : all) {
    if (p.group == group && p.tensor.requires_grad()) out.push_back(p);
  }
  return out;
}

void zero_grads(ParamList& params) {
  for (NamedParam& p : params) p.tensor.zero_grad();
}

void put_adam(Checkpoint& ck, const std::string& prefix, const AdamState& s, const ParamList& params) {
  ck.put_ints(prefix + ".step", std::vector<std::int64_t>{s.step});
  for (const NamedParam& p : params) {
    auto m = s.m.find(p.name);
    if (m == s.m.end()) continue;
    ck.put_floats(prefix + ".m." + p.name, p.tensor.shape(), m->second);
    ck.put_floats(prefix + ".v." + p.name, p.tensor.shape(), s.v.at(p.name));
  }
}

void check_sample(const PairedSample& s, const ModelConfig& mc) {
  const std::size_t h = s.labels.height, w = s.labels.width;
  if (s.vis.rank() != 3 || s.vis.dim(0) != h || s.vis.dim(1) != w || s.ir.dim(0) != h || s.ir.dim(1) != w) {
    throw DataError("sample '" + s.id + "': modalities are not aligned with the labels");
  }
  const std::size_t unit = std::max({mc.scale, mc.patch, Discriminator::kDownsample});
  if (h % unit != 0 || w % unit != 0) {
    throw DataError("sample '" + s.id + "': size " + std::to_string(h) + "x" + std::to_string(w) +
                    " must be a multiple of " + std::to_string(unit));
  }
}

struct Accum {
  double rec = 0, commit = 0, perc = 0, adv_g = 0, adv_d = 0, seg = 0, total_g = 0, joint = 0;
  std::size_t n = 0;
  void add(const StepLog& s) {
    rec += s.rec;
    commit += s.commit;
    perc += s.perc;
    adv_g += s.adv_g;
    adv_d += s.adv_d;
    seg += s.seg;
    total_g += s.total_g;
    joint += s.joint;
    ++n;
  }
};

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (lambda_seg < 0) throw ConfigError("lambda_seg must be >= 0");
  if (prompt_points < 1) throw ConfigError("prompt_points must be >= 1");
  if (prompt_dropout < 0 || prompt_dropout > 1) throw ConfigError("prompt_dropout must lie in [0, 1]");
  weights.validate();
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = model;
  m.variant = variant;
  m.init_seed = seed;
  return m;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.name);
  return out;
}

bool set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.name) {
      f.set(cfg, value);
      return true;
    }
  }
  return false;
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.name) + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

TrainConfig config_from_text(const std::string& text) {
  TrainConfig cfg;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (!set_config_value(cfg, k, v)) throw ConfigError("unknown config key '" + k + "'");
  }
  return cfg;
}

void adam_step(const ParamList& params, AdamState& state, const AdamConfig& cfg) {
  for (const NamedParam& p : params) {
    if (p.group != ParamGroup::frozen && p.tensor.requires_grad() && !p.tensor.has_grad()) {
      throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (const NamedParam& p : params) {
    if (p.group == ParamGroup::frozen || !p.tensor.requires_grad()) continue;
    Tensor x = p.tensor;
    const auto g = x.grad();
    auto w = x.mutable_data();
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.size() != w.size()) {
      m.assign(w.size(), Scalar(0));
      v.assign(w.size(), Scalar(0));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<Scalar>(mi);
      v[i] = static_cast<Scalar>(vi);
      const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
      w[i] = static_cast<Scalar>(static_cast<double>(w[i]) * decay - update);
    }
  }
}

JointLoss joint_loss(const Tensor& fusion_objective, const Tensor& logits, const LabelGrid& labels, double lambda_seg) {
  if (logits.rank() != 3 || logits.dim(1) != labels.height || logits.dim(2) != labels.width) {
    throw DimensionError("joint_loss: logits " + shape_str(logits.shape()) + " vs labels " +
                         std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  JointLoss out;
  out.fusion = fusion_objective;
  out.seg = cross_entropy(logits, labels.ids);
  out.total = fusion_objective + scale(out.seg, static_cast<Scalar>(lambda_seg));
  return out;
}

std::string epoch_csv_header() {
  return "epoch,step,variant,rec,commit,perc,adv_g,adv_d,seg,total_g,joint,val_miou,reseeded";
}

std::string epoch_csv_row(const EpochLog& e, Variant variant) {
  std::ostringstream os;
  os.precision(9);
  os << e.epoch << ',' << e.step << ',' << to_string(variant) << ',' << e.rec << ',' << e.commit << ',' << e.perc
     << ',' << e.adv_g << ',' << e.adv_d << ',' << e.seg << ',' << e.total_g << ',' << e.joint << ',';
  if (std::isnan(e.val_miou)) {
    os << "nan";
  } else {
    os << e.val_miou;
  }
  os << ',' << e.reseeded;
  return os.str();
}

Checkpoint make_checkpoint(const FusionSamModel& model, const TrainConfig& cfg, const AdamState* gen,
                           const AdamState* disc, const Rng* rng) {
  Checkpoint ck;
  const ParamList params = model.parameters();
  for (const NamedParam& p : params) ck.put_floats(p.name, p.tensor.shape(), p.tensor.data());
  auto& mutable_model = const_cast<FusionSamModel&>(model);
  const auto prefixes = model.codebook_prefixes();
  const auto books = mutable_model.codebooks();
  for (std::size_t i = 0; i < books.size(); ++i) ck.put_ints(prefixes[i] + ".usage", books[i]->usage);
  ck.put_text("meta.config", config_to_text(cfg));
  if (gen != nullptr) put_adam(ck, "adam.generator", *gen, params);
  if (disc != nullptr) put_adam(ck, "adam.discriminator", *disc, params);
  if (rng != nullptr) ck.put_text("meta.rng", rng->serialize());
  return ck;
}

void load_parameters(const Checkpoint& ck, FusionSamModel& model) {
  for (const NamedParam& p : model.parameters()) {
    Shape shape;
    const auto values = ck.get_floats(p.name, &shape);
    if (shape != p.tensor.shape()) {
      throw ConfigError("checkpoint entry '" + p.name + "' has shape " + shape_str(shape) + ", model expects " +
                        shape_str(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  const auto prefixes = model.codebook_prefixes();
  const auto books = model.codebooks();
  for (std::size_t i = 0; i < books.size(); ++i) {
    const std::string name = prefixes[i] + ".usage";
    if (!ck.contains(name)) continue;
    auto usage = ck.get_ints(name);
    if (usage.size() != books[i]->usage.size()) throw ConfigError("checkpoint entry '" + name + "' has wrong length");
    books[i]->usage = std::move(usage);
  }
}

TrainConfig checkpoint_config(const Checkpoint& ck) { return config_from_text(ck.get_text("meta.config")); }

FusionSamModel model_from_checkpoint(const Checkpoint& ck) {
  const TrainConfig cfg = checkpoint_config(ck);
  FusionSamModel model(cfg.model_config());
  load_parameters(ck, model);
  return model;
}

Inference infer(FusionSamModel& model, const Tensor& vis, const Tensor& ir, const InferOptions& opts) {
  Inference out;
  ForwardResult r = model.fuse(vis, ir, false);
  out.fusion = r.fusion;
  out.mask = segment(model.decode(r, nullptr));
  if (opts.self_prompt) {
    const PromptSet prompts = sample_prompts(r.fusion, out.mask.classes, opts.prompt_points, opts.seed);
    if (!prompts.fallback) out.mask = segment(model.decode(r, &prompts));
  }
  return out;
}

EvalResult evaluate(FusionSamModel& model, const std::vector<PairedSample>& samples, const EvalOptions& opts) {
  const std::size_t classes = model.config().num_classes;
  if (opts.num_classes != 0 && opts.num_classes != classes) {
    throw ConfigError("evaluate: dataset has " + std::to_string(opts.num_classes) + " classes, model has " +
                      std::to_string(classes));
  }
  EvalResult out;
  out.confusion = ConfusionMatrix(classes);
  InferOptions io{opts.self_prompt, opts.prompt_points, 0};
  for (const PairedSample& s : samples) {
    for (int id : s.labels.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= classes) {
        throw ConfigError("evaluate: sample '" + s.id + "' has label " + std::to_string(id) + " but the model has " +
                          std::to_string(classes) + " classes");
      }
    }
    Inference inf = infer(model, s.vis, s.ir, io);
    out.confusion.add(inf.mask.classes, s.labels);
    out.predictions.push_back(std::move(inf.mask.classes));
  }
  out.report = out.confusion.report(opts.include_background);
  return out;
}

EvalResult evaluate(const Checkpoint& ck, const std::vector<PairedSample>& samples, const EvalOptions& opts) {
  FusionSamModel model = model_from_checkpoint(ck);
  return evaluate(model, samples, opts);
}

TrainResult train(const TrainConfig& cfg, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& val_set, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: dataset is empty");
  const ModelConfig mc = cfg.model_config();
  for (const PairedSample& s : train_set) check_sample(s, mc);
  for (const PairedSample& s : val_set) check_sample(s, mc);

  FusionSamModel model(mc);
  Rng rng(splitmix(cfg.seed ^ 0x5EEDF00DULL));
  const ParamList all = model.parameters();
  ParamList gen = select(all, ParamGroup::generator);
  ParamList disc = select(all, ParamGroup::discriminator);
  AdamState adam_g, adam_d;
  const AdamConfig acfg{cfg.lr, cfg.weight_decay};
  const bool adversarial = model.has_lstg() && cfg.weights.adv_beta > 0;
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(std::min(cfg.batch_size, train_set.size()));

  TrainResult result;
  result.best_val_miou = kNaN;
  result.last = make_checkpoint(model, cfg, &adam_g, &adam_d, &rng);
  bool have_best = false;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
    std::vector<std::vector<std::int64_t>> usage_before;
    for (Codebook* cb : model.codebooks()) usage_before.push_back(cb->usage);
    std::vector<Scalar> candidates;
    rng.shuffle(order);
    Accum acc;

    for (std::size_t b = 0; b < per_epoch; ++b) {
      if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
      const std::size_t lo = b * cfg.batch_size, hi = std::min(lo + cfg.batch_size, order.size());
      StepLog log;
      log.step = step + 1;
      log.epoch = epoch;
      try {
        zero_grads(gen);
        zero_grads(disc);
        Tensor joint_sum = Tensor::scalar(0), adv_d_sum = Tensor::scalar(0);
        candidates.clear();
        for (std::size_t i = lo; i < hi; ++i) {
          const PairedSample& s = train_set[order[i]];
          ForwardResult r = model.fuse(s.vis, s.ir, true);
          const bool prompted = rng.uniform() >= cfg.prompt_dropout;
          const std::uint64_t prompt_seed = rng.next_u64();
          PromptSet prompts;
          if (prompted) prompts = sample_prompts(r.fusion, s.labels, cfg.prompt_points, prompt_seed);
          const Tensor logits = model.decode(r, prompted ? &prompts : nullptr);

          Tensor fusion_obj = Tensor::scalar(0);
          if (model.has_lstg()) {
            const ModalityTerms terms[2] = {
                {s.vis, r.vis_recon, r.vis_tokens->pre_quant, r.vis_tokens->quantized,
                 adversarial ? &model.disc_vis : nullptr, &model.perc_vis},
                {s.ir, r.ir_recon, r.ir_tokens->pre_quant, r.ir_tokens->quantized,
                 adversarial ? &model.disc_ir : nullptr, &model.perc_ir}};
            const LstgLossParts parts = lstg_loss(terms, cfg.weights);
            fusion_obj = parts.total_g;
            log.rec += parts.rec.item();
            log.commit += parts.commit.item();
            log.perc += parts.perc.item();
            log.adv_g += parts.adv_g.item();
            log.adv_d += parts.adv_d.item();
            adv_d_sum = adv_d_sum + parts.adv_d;
            for (const LatentTokens* t : {&*r.vis_tokens, &*r.ir_tokens}) {
              const auto z = t->pre_quant.data();
              candidates.insert(candidates.end(), z.begin(), z.end());
            }
          }
          const JointLoss jl = joint_loss(fusion_obj, logits, s.labels, cfg.lambda_seg);
          log.seg += jl.seg.item();
          log.total_g += jl.fusion.item();
          joint_sum = joint_sum + jl.total;
        }
        const Tensor joint = scale(joint_sum, inv_batch);
        const double n = static_cast<double>(hi - lo);
        log.rec /= n;
        log.commit /= n;
        log.perc /= n;
        log.adv_g /= n;
        log.adv_d /= n;
        log.seg /= n;
        log.total_g /= n;
        log.joint = joint.item();
        if (!std::isfinite(log.joint) || !std::isfinite(log.adv_d)) {
          throw NumericError("non-finite loss at step " + std::to_string(step + 1));
        }
        joint.backward();
        adam_step(gen, adam_g, acfg);
        if (adversarial) {
          zero_grads(disc);
          scale(adv_d_sum, inv_batch).backward();
          adam_step(disc, adam_d, acfg);
        }
        for (const NamedParam& p : gen) {
          for (Scalar x : p.tensor.data()) {
            if (!std::isfinite(static_cast<double>(x))) {
              throw NumericError("parameter '" + p.name + "' became non-finite at step " + std::to_string(step + 1));
            }
          }
        }
      } catch (const NumericError& e) {
        result.divergence = e.what();
        result.steps_done = step;
        if (!have_best) result.best = result.last;
        return result;
      }
      ++step;
      acc.add(log);
      result.steps.push_back(log);
    }

    EpochLog elog;
    elog.epoch = epoch;
    elog.step = step;
    if (acc.n > 0) {
      const double n = static_cast<double>(acc.n);
      elog.rec = acc.rec / n;
      elog.commit = acc.commit / n;
      elog.perc = acc.perc / n;
      elog.adv_g = acc.adv_g / n;
      elog.adv_d = acc.adv_d / n;
      elog.seg = acc.seg / n;
      elog.total_g = acc.total_g / n;
      elog.joint = acc.joint / n;
    }
    if (cfg.reseed_dead_codes && !candidates.empty()) {
      const auto books = model.codebooks();
      for (std::size_t i = 0; i < books.size(); ++i) elog.reseeded += books[i]->reseed_dead(usage_before[i], candidates, rng);
    }
    const bool final_epoch = epoch == cfg.epochs || (cfg.max_steps != 0 && step >= cfg.max_steps);
    elog.val_miou = kNaN;
    result.last = make_checkpoint(model, cfg, &adam_g, &adam_d, &rng);
    if (!val_set.empty() && (epoch % cfg.eval_every == 0 || final_epoch)) {
      EvalOptions eo;
      eo.include_background = cfg.include_background;
      eo.self_prompt = cfg.self_prompt;
      eo.prompt_points = cfg.prompt_points;
      elog.val_miou = evaluate(model, val_set, eo).report.miou;
      if (!have_best || elog.val_miou > result.best_val_miou) {
        result.best_val_miou = elog.val_miou;
        result.best = result.last;
        have_best = true;
      }
    }
    result.epochs.push_back(elog);
    if (hooks.on_epoch) hooks.on_epoch(elog);
  }
  result.steps_done = step;
  if (!have_best) result.best = result.last;
  return result;
}

}  // namespace fusionsam
