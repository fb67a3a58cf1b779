#include "fusionsam/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fusionsam/error.hpp"
#include "fusionsam/random.hpp"

namespace fusionsam {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModalities[3] = {"vis", "ir", "labels"};

std::set<std::string> png_stems(const fs::path& dir) {
  std::set<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.insert(entry.path().stem().string());
  }
  return out;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string sample_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return buf;
}

constexpr double kVisBackground = 0.45;
constexpr double kIrBackground = 0.2;

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

ClassMap::ClassMap() {
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = static_cast<int>(i);
}

ClassMap load_class_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("class map: cannot open " + path.string());
  ClassMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), '=', ' ');
    std::istringstream ss(line);
    int raw = 0, id = 0;
    if (!(ss >> raw)) continue;
    std::string rest;
    if (!(ss >> id) || (ss >> rest) || raw < 0 || raw > 255 || id < 0) {
      throw DataError("class map " + path.string() + ":" + std::to_string(lineno) + ": expected 'raw = id'");
    }
    map.table[static_cast<std::size_t>(raw)] = id;
  }
  return map;
}

std::vector<PairedSample> load_dataset(const fs::path& root, Split split, std::size_t num_classes,
                                       const std::optional<ClassMap>& class_map) {
  const fs::path base = root / to_string(split);
  if (!fs::is_directory(base)) throw DataError("dataset split directory not found: " + base.string());
  std::set<std::string> stems[3];
  std::set<std::string> all;
  for (int m = 0; m < 3; ++m) {
    stems[m] = png_stems(base / kModalities[m]);
    all.insert(stems[m].begin(), stems[m].end());
  }
  std::vector<PairedSample> out;
  for (const std::string& id : all) {
    for (int m = 0; m < 3; ++m) {
      if (stems[m].count(id) == 0) {
        throw DataError("sample '" + id + "': missing " + kModalities[m] + " file in " + base.string());
      }
    }
    PairedSample s;
    s.id = id;
    const Image8 vis = read_png_rgb(base / "vis" / (id + ".png"));
    const Image8 ir = read_png_gray(base / "ir" / (id + ".png"));
    s.labels = read_png_indexed(base / "labels" / (id + ".png"));
    if (vis.height != ir.height || vis.width != ir.width || vis.height != s.labels.height ||
        vis.width != s.labels.width) {
      throw DataError("sample '" + id + "': modality sizes differ (vis " + std::to_string(vis.height) + "x" +
                      std::to_string(vis.width) + ", ir " + std::to_string(ir.height) + "x" +
                      std::to_string(ir.width) + ", labels " + std::to_string(s.labels.height) + "x" +
                      std::to_string(s.labels.width) + ")");
    }
    for (int& v : s.labels.ids) {
      if (class_map) v = (*class_map)(v);
      if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
        throw DataError("sample '" + id + "': label id " + std::to_string(v) + " >= num_classes " +
                        std::to_string(num_classes));
      }
    }
    s.vis = image_to_tensor(vis);
    s.ir = image_to_tensor(ir);
    out.push_back(std::move(s));
  }
  return out;
}

void SynthConfig::validate() const {
  if (image_size == 0 || image_size % 4 != 0) throw ConfigError("synth image_size must be a positive multiple of 4");
  if (num_classes < 2) throw ConfigError("synth num_classes must be >= 2");
  if (num_classes > 32) throw ConfigError("synth num_classes must fit the 32-entry palette");
  if (noise < 0) throw ConfigError("synth noise must be non-negative");
  if (vis_contrast <= noise || ir_contrast <= noise) throw ConfigError("synth contrasts must exceed the noise level");
}

ClassVisibility synth_visibility(std::size_t class_id) {
  if (class_id == 0) return ClassVisibility::background;
  switch ((class_id - 1) % 3) {
    case 0: return ClassVisibility::both;
    case 1: return ClassVisibility::ir_only;
    default: return ClassVisibility::vis_only;
  }
}

ClassAppearance synth_appearance(const SynthConfig& cfg, std::size_t class_id) {
  ClassAppearance a;
  const ClassVisibility role = synth_visibility(class_id);
  if (role == ClassVisibility::background) return a;
  // Later cycles of the role pattern get a weaker, sign-flipped signal.
  const std::size_t cycle = (class_id - 1) / 3;
  const double strength = 1.0 / static_cast<double>(1 + cycle);
  const double sign = cycle % 2 == 0 ? 1.0 : -1.0;
  if (role != ClassVisibility::ir_only) {
    const std::size_t hue = (class_id - 1 + cycle) % 3;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      a.vis_offset[ch] = sign * strength * cfg.vis_contrast * (ch == hue ? 1.0 : -0.5);
    }
    a.vis_stripe = 0.25 * cfg.vis_contrast;
    a.stripe_period = 2 + class_id % 3;
  }
  if (role != ClassVisibility::vis_only) {
    a.ir_offset = strength * cfg.ir_contrast * (role == ClassVisibility::ir_only ? 1.0 : 0.55);
  }
  return a;
}

PairedSample synth_sample(const SynthConfig& cfg, Split split, std::size_t index) {
  cfg.validate();
  Rng rng(mix(cfg.seed) ^ mix(static_cast<std::uint64_t>(split) * 0x100000000ULL + index));
  const std::size_t n = cfg.image_size;
  PairedSample s;
  s.id = sample_id(index);
  s.labels = LabelGrid(n, n, 0);

  const std::size_t fg = cfg.num_classes - 1;
  const std::size_t start = rng.index(fg);
  const std::size_t lo = std::max<std::size_t>(2, n / 4), hi = std::max(lo, n * 7 / 16);
  for (std::size_t i = 0; i < cfg.shapes_per_image; ++i) {
    const int cls = static_cast<int>(1 + (start + i) % fg);
    const std::size_t h = lo + rng.index(hi - lo + 1), w = lo + rng.index(hi - lo + 1);
    const std::size_t top = rng.index(n - h + 1), left = rng.index(n - w + 1);
    const bool ellipse = rng.uniform() < 0.5;
    const double cy = static_cast<double>(top) + 0.5 * static_cast<double>(h);
    const double cx = static_cast<double>(left) + 0.5 * static_cast<double>(w);
    for (std::size_t r = top; r < top + h; ++r) {
      for (std::size_t c = left; c < left + w; ++c) {
        if (ellipse) {
          const double dy = (static_cast<double>(r) + 0.5 - cy) / (0.5 * static_cast<double>(h));
          const double dx = (static_cast<double>(c) + 0.5 - cx) / (0.5 * static_cast<double>(w));
          if (dy * dy + dx * dx > 1.0) continue;
        }
        s.labels.at(r, c) = cls;
      }
    }
  }

  std::vector<ClassAppearance> looks(cfg.num_classes);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) looks[c] = synth_appearance(cfg, c);
  std::vector<Scalar> vis(n * n * 3), ir(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const ClassAppearance& a = looks[static_cast<std::size_t>(s.labels.at(r, c))];
      const double stripe = a.stripe_period == 0 ? 0.0 : ((c / a.stripe_period) % 2 == 0 ? a.vis_stripe : -a.vis_stripe);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = kVisBackground + a.vis_offset[ch] + stripe + cfg.noise * rng.normal();
        vis[(r * n + c) * 3 + ch] = static_cast<Scalar>(std::clamp(v, 0.0, 1.0));
      }
      const double t = kIrBackground + a.ir_offset + cfg.noise * rng.normal();
      ir[r * n + c] = static_cast<Scalar>(std::clamp(t, 0.0, 1.0));
    }
  }
  // Quantize to 8 bits so the in-memory sample equals what load_dataset reads back.
  s.vis = image_to_tensor(tensor_to_image(Tensor::from({n, n, 3}, std::move(vis))));
  s.ir = image_to_tensor(tensor_to_image(Tensor::from({n, n, 1}, std::move(ir))));
  return s;
}

void gen_synthetic(const SynthConfig& cfg, const fs::path& root) {
  cfg.validate();
  const std::pair<Split, std::size_t> splits[] = {
      {Split::train, cfg.train_count}, {Split::val, cfg.val_count}, {Split::test, cfg.test_count}};
  for (const auto& [split, count] : splits) {
    const fs::path base = root / to_string(split);
    for (const char* m : kModalities) fs::create_directories(base / m);
    for (std::size_t i = 0; i < count; ++i) {
      const PairedSample s = synth_sample(cfg, split, i);
      write_png(base / "vis" / (s.id + ".png"), tensor_to_image(s.vis));
      write_png(base / "ir" / (s.id + ".png"), tensor_to_image(s.ir));
      export_mask(s.labels, base / "labels" / (s.id + ".png"));
    }
  }
}

std::span<const Rgb> label_palette() {
  static const std::vector<Rgb> palette = [] {
    std::vector<Rgb> p = {{0, 0, 0},       {64, 0, 128},    {64, 64, 0},    {0, 128, 192},  {0, 0, 192},
                          {128, 128, 0},   {64, 64, 128},   {192, 128, 128}, {192, 64, 0}};
    for (std::size_t i = p.size(); i < 32; ++i) {
      p.push_back({static_cast<std::uint8_t>(i * 37 % 256), static_cast<std::uint8_t>(i * 91 % 256),
                   static_cast<std::uint8_t>(i * 151 % 256)});
    }
    return p;
  }();
  return palette;
}

void export_mask(const LabelGrid& classes, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png_indexed(path, classes, label_palette());
}

}  // namespace fusionsam
