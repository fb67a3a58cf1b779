#pragma once

// Paired visible/infrared datasets on disk and a deterministic synthetic
// scene generator.
//
// Layout: root/{train,val,test}/{vis,ir,labels}/<id>.png
//   vis    RGB8
//   ir     Gray8
//   labels indexed 8-bit (grayscale label files are read by value)

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusionsam/image_io.hpp"
#include "fusionsam/label_grid.hpp"
#include "fusionsam/segmentation.hpp"
#include "fusionsam/tensor.hpp"

namespace fusionsam {

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct PairedSample {
  std::string id;
  Tensor vis;        // [H x W x 3] in [0, 1]
  Tensor ir;         // [H x W x 1] in [0, 1]
  LabelGrid labels;  // ids < num_classes
};

// Raw on-disk label value -> class id. Values not listed map to themselves.
struct ClassMap {
  std::array<int, 256> table{};
  ClassMap();
  int operator()(int raw) const { return table[static_cast<std::size_t>(raw)]; }
};

/// Lines of `raw = id` (or `raw id`); '#' starts a comment.
ClassMap load_class_map(const std::filesystem::path& path);

/// Sorted by id. Throws DataError naming the id on a missing counterpart or
/// a spatial mismatch, and on any label >= num_classes.
std::vector<PairedSample> load_dataset(const std::filesystem::path& root, Split split, std::size_t num_classes,
                                       const std::optional<ClassMap>& class_map = std::nullopt);

struct SynthConfig {
  std::size_t image_size = 32;
  std::size_t num_classes = 4;
  std::size_t shapes_per_image = 3;
  std::size_t train_count = 8;
  std::size_t val_count = 4;
  std::size_t test_count = 4;
  double vis_contrast = 0.35;
  double ir_contrast = 0.45;
  double noise = 0.04;  // std-dev of per-pixel Gaussian noise
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ClassVisibility { background, both, ir_only, vis_only };

/// Class roles cycle through both, ir-only, vis-only for ids 1, 2, 3, ...
ClassVisibility synth_visibility(std::size_t class_id);

struct ClassAppearance {
  std::array<double, 3> vis_offset{};  // added to the background colour
  double vis_stripe = 0.0;             // texture amplitude
  std::size_t stripe_period = 0;
  double ir_offset = 0.0;
};

ClassAppearance synth_appearance(const SynthConfig& cfg, std::size_t class_id);

/// One generated sample, in memory.
PairedSample synth_sample(const SynthConfig& cfg, Split split, std::size_t index);

/// Writes every split under `root` in the load_dataset layout.
void gen_synthetic(const SynthConfig& cfg, const std::filesystem::path& root);

/// Fixed 32-entry label palette: 0 black, eight street-scene colours,
/// then a deterministic fill.
std::span<const Rgb> label_palette();

void export_mask(const LabelGrid& classes, const std::filesystem::path& path);
inline void export_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
  export_mask(mask.classes, path);
}

}  // namespace fusionsam
