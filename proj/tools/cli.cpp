#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "fusionsam/error.hpp"
#include "fusionsam/gradient_suite.hpp"
#include "fusionsam/image_io.hpp"
#include "fusionsam/parallel.hpp"

namespace fusionsam::cli {

namespace fs = std::filesystem;

namespace {

struct PathKey {
  const char* name;
  std::string RunConfig::*member;
};

constexpr PathKey kPathKeys[] = {
    {"data_root", &RunConfig::data_root}, {"checkpoint", &RunConfig::checkpoint}, {"out", &RunConfig::out},
    {"split", &RunConfig::split},         {"class_map", &RunConfig::class_map},   {"pred_dir", &RunConfig::pred_dir},
};

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const auto x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  try {
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

bool set_synth(SynthConfig& s, const std::string& key, const std::string& v) {
  if (key == "synth.image_size") s.image_size = parse_count(key, v);
  else if (key == "synth.num_classes") s.num_classes = parse_count(key, v);
  else if (key == "synth.shapes_per_image") s.shapes_per_image = parse_count(key, v);
  else if (key == "synth.train_count") s.train_count = parse_count(key, v);
  else if (key == "synth.val_count") s.val_count = parse_count(key, v);
  else if (key == "synth.test_count") s.test_count = parse_count(key, v);
  else if (key == "synth.vis_contrast") s.vis_contrast = parse_real(key, v);
  else if (key == "synth.ir_contrast") s.ir_contrast = parse_real(key, v);
  else if (key == "synth.noise") s.noise = parse_real(key, v);
  else return false;
  return true;
}

void apply(RunConfig& rc, const std::string& key, const std::string& value) {
  for (const PathKey& p : kPathKeys) {
    if (key == p.name) {
      rc.*(p.member) = value;
      return;
    }
  }
  if (key == "csv") {
    if (value != "true" && value != "false") throw ConfigError("config key 'csv': expected true or false");
    rc.csv = value == "true";
    return;
  }
  if (set_synth(rc.synth, key, value)) return;
  if (set_config_value(rc.train, key, value)) {
    if (key == "seed") rc.synth.seed = rc.train.seed;
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<ClassMap> class_map_of(const RunConfig& rc) {
  if (rc.class_map.empty()) return std::nullopt;
  return load_class_map(rc.class_map);
}

std::vector<PairedSample> load_split(const RunConfig& rc, Split split) {
  return load_dataset(rc.data_root, split, rc.train.model.num_classes, class_map_of(rc));
}

Checkpoint need_checkpoint(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return Checkpoint::load(rc.checkpoint);
}

std::string pct(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * x);
  return buf;
}

int cmd_synth(const RunConfig& rc, std::ostream& out) {
  gen_synthetic(rc.synth, rc.out);
  out << "wrote synthetic dataset to " << rc.out << " (" << rc.synth.train_count << "/" << rc.synth.val_count << "/"
      << rc.synth.test_count << " train/val/test, " << rc.synth.image_size << "x" << rc.synth.image_size << ", "
      << rc.synth.num_classes << " classes, seed " << rc.synth.seed << ")\n";
  return kOk;
}

int cmd_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto train_set = load_split(rc, Split::train);
  std::vector<PairedSample> val_set;
  if (fs::is_directory(fs::path(rc.data_root) / "val")) val_set = load_split(rc, Split::val);
  fs::create_directories(rc.out);
  const fs::path csv_path = fs::path(rc.out) / "metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  csv << epoch_csv_header() << '\n' << std::flush;

  const Variant variant = rc.train.variant;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    csv << epoch_csv_row(e, variant) << '\n' << std::flush;
    out << "variant=" << to_string(variant) << " epoch=" << e.epoch << " step=" << e.step << " joint=" << e.joint
        << " seg=" << e.seg;
    if (!std::isnan(e.val_miou)) out << " val_miou=" << pct(e.val_miou);
    out << '\n';
  };
  const auto start = std::chrono::steady_clock::now();
  TrainResult result = train(rc.train, train_set, val_set, hooks);
  result.last.save(fs::path(rc.out) / "last.ckpt");
  result.best.save(fs::path(rc.out) / "best.ckpt");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (result.divergence) {
    err << "training diverged: " << *result.divergence << "; kept last good checkpoint in " << rc.out << '\n';
    return kNumeric;
  }
  out << "variant=" << to_string(variant) << " steps=" << result.steps_done << " seconds=" << secs
      << " checkpoints=" << rc.out << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& rc, std::ostream& out) {
  const auto samples = load_split(rc, parse_split(rc.split));
  IouReport report;
  if (!rc.pred_dir.empty()) {
    ConfusionMatrix cm(rc.train.model.num_classes);
    for (const PairedSample& s : samples) {
      const fs::path p = fs::path(rc.pred_dir) / (s.id + ".png");
      if (!fs::exists(p)) throw DataError("sample '" + s.id + "': no prediction at " + p.string());
      const LabelGrid pred = read_png_indexed(p);
      if (pred.height != s.labels.height || pred.width != s.labels.width) {
        throw DataError("sample '" + s.id + "': prediction size differs from its labels");
      }
      cm.add(pred, s.labels);
    }
    report = cm.report(rc.train.include_background);
  } else {
    EvalOptions eo;
    eo.include_background = rc.train.include_background;
    eo.self_prompt = rc.train.self_prompt;
    eo.prompt_points = rc.train.prompt_points;
    eo.num_classes = rc.train.model.num_classes;
    report = evaluate(need_checkpoint(rc), samples, eo).report;
  }
  print_report(out, report, rc.csv);
  return kOk;
}

int cmd_fuse(const RunConfig& rc, std::ostream& out) {
  FusionSamModel model = model_from_checkpoint(need_checkpoint(rc));
  const auto samples = load_split(rc, parse_split(rc.split));
  fs::create_directories(rc.out);
  for (const PairedSample& s : samples) {
    const Tensor map = model.fuse(s.vis, s.ir, false).fusion.map;
    Tensor img = map;
    if (map.dim(2) != 1 && map.dim(2) != 3) {
      // Other channel counts are written as their per-pixel mean.
      std::vector<Scalar> gray(map.dim(0) * map.dim(1));
      const auto v = map.data();
      const std::size_t c = map.dim(2);
      for (std::size_t i = 0; i < gray.size(); ++i) {
        Scalar acc = 0;
        for (std::size_t k = 0; k < c; ++k) acc += v[i * c + k];
        gray[i] = acc / static_cast<Scalar>(c);
      }
      img = Tensor::from({map.dim(0), map.dim(1), 1}, std::move(gray));
    }
    write_png(fs::path(rc.out) / (s.id + ".png"), tensor_to_image(img));
  }
  out << "wrote " << samples.size() << " fusion images to " << rc.out << '\n';
  return kOk;
}

int cmd_infer(const RunConfig& rc, std::ostream& out) {
  FusionSamModel model = model_from_checkpoint(need_checkpoint(rc));
  const auto samples = load_split(rc, parse_split(rc.split));
  fs::create_directories(rc.out);
  InferOptions io{rc.train.self_prompt, rc.train.prompt_points, 0};
  for (const PairedSample& s : samples) {
    export_mask(infer(model, s.vis, s.ir, io).mask, fs::path(rc.out) / (s.id + ".png"));
  }
  out << "wrote " << samples.size() << " segmentation masks to " << rc.out << '\n';
  return kOk;
}

int cmd_gradcheck(std::ostream& out) {
  bool ok = true;
  for (const GradCaseResult& r : run_gradient_suite()) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-4s %-30s max_rel_err=%.3e coords=%zu", r.passed ? "ok" : "FAIL",
                  r.name.c_str(), r.report.max_rel_err, r.report.coords_checked);
    out << line << '\n';
    ok = ok && r.passed;
  }
  out << (ok ? "gradient suite passed\n" : "gradient suite FAILED\n");
  return ok ? kOk : kNumeric;
}

void set_threads_from_env() {
  const char* env = std::getenv("FUSIONSAM_THREADS");
  if (env == nullptr || *env == '\0') {
    set_num_threads(1);
    return;
  }
  const std::size_t n = parse_count("FUSIONSAM_THREADS", env);
  if (n == 0) throw ConfigError("FUSIONSAM_THREADS must be >= 1");
  set_num_threads(n);
}

}  // namespace

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const PathKey& p : kPathKeys) keys.emplace_back(p.name);
  keys.emplace_back("csv");
  for (const char* k : {"synth.image_size", "synth.num_classes", "synth.shapes_per_image", "synth.train_count",
                        "synth.val_count", "synth.test_count", "synth.vis_contrast", "synth.ir_contrast",
                        "synth.noise"}) {
    keys.emplace_back(k);
  }
  for (const std::string& k : config_keys()) keys.push_back(k);
  return keys;
}

RunConfig build_run_config(const std::string& file_text,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig rc;
  for (const auto& [k, v] : parse_key_values(file_text)) apply(rc, k, v);
  for (const auto& [k, v] : overrides) apply(rc, k, v);
  return rc;
}

void print_report(std::ostream& os, const IouReport& report, bool csv) {
  if (csv) {
    os << "class,iou\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) os << c << ',' << pct(report.per_class[c]) << '\n';
    os << "miou," << pct(report.miou) << '\n';
    return;
  }
  os << "class   IoU\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    char line[64];
    std::snprintf(line, sizeof(line), "%-7zu %s\n", c, std::isnan(report.per_class[c]) ? "-" : pct(report.per_class[c]).c_str());
    os << line;
  }
  os << "mIoU    " << pct(report.miou) << '\n';
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fusion-mask prompted segmentation of visible/infrared image pairs", "fusionsam"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config, data_root, checkpoint, out_dir, variant, split, class_map, pred_dir;
  std::optional<std::uint64_t> seed;
  bool include_background = false, csv = false;
  std::vector<std::string> sets;
  app.add_option("--config", config, "key = value configuration file");
  app.add_option("--data-root", data_root, "dataset root ({train,val,test}/{vis,ir,labels})");
  app.add_option("--checkpoint", checkpoint, "checkpoint file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--variant", variant, "full, no_lstg or no_fmp_concat");
  app.add_option("--split", split, "train, val or test (eval/fuse/infer)");
  app.add_option("--class-map", class_map, "raw label value -> class id map");
  app.add_option("--pred-dir", pred_dir, "eval: score saved prediction PNGs instead of a checkpoint");
  app.add_flag("--include-background", include_background, "count class 0 in the mIoU");
  app.add_flag("--csv", csv, "eval: CSV output");
  app.add_option("--set", sets, "extra key=value override (repeatable)");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset to --out");
  auto* train_cmd = app.add_subcommand("train", "train on --data-root, write checkpoints and metrics.csv to --out");
  auto* eval = app.add_subcommand("eval", "per-class IoU and mIoU of a checkpoint (or --pred-dir) on --split");
  auto* fuse = app.add_subcommand("fuse", "write fusion-mask PNGs for --split to --out");
  auto* infer_cmd = app.add_subcommand("infer", "write indexed segmentation PNGs for --split to --out");
  auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  std::vector<const char*> argv;
  argv.push_back("fusionsam");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    set_threads_from_env();
    if (gradcheck->parsed()) return cmd_gradcheck(out);

    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (data_root) overrides.emplace_back("data_root", *data_root);
    if (checkpoint) overrides.emplace_back("checkpoint", *checkpoint);
    if (out_dir) overrides.emplace_back("out", *out_dir);
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (variant) overrides.emplace_back("variant", *variant);
    if (split) overrides.emplace_back("split", *split);
    if (class_map) overrides.emplace_back("class_map", *class_map);
    if (pred_dir) overrides.emplace_back("pred_dir", *pred_dir);
    if (include_background) overrides.emplace_back("include_background", "true");
    if (csv) overrides.emplace_back("csv", "true");
    RunConfig rc = build_run_config(config ? read_text(*config) : std::string(), overrides);

    if (synth->parsed()) return cmd_synth(rc, out);
    if (train_cmd->parsed()) return cmd_train(rc, out, err);
    if (eval->parsed()) return cmd_eval(rc, out);
    if (fuse->parsed()) return cmd_fuse(rc, out);
    if (infer_cmd->parsed()) return cmd_infer(rc, out);
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fusionsam::cli
