#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fusionsam/label_grid.hpp"

namespace fusionsam {

struct IouReport {
  // NaN for classes that appear in neither predictions nor labels; those are
  // left out of the mean.
  std::vector<double> per_class;
  double miou = 0.0;
  std::size_t classes_counted = 0;
};

// counts[label][prediction], accumulated over any number of images.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(const LabelGrid& prediction, const LabelGrid& label);
  std::int64_t at(std::size_t label, std::size_t prediction) const { return counts_[label * n_ + prediction]; }
  std::size_t num_classes() const { return n_; }

  /// IoU_c = TP / (TP + FP + FN). Class 0 (background) enters the mean only
  /// when `include_background` is set.
  IouReport report(bool include_background) const;

 private:
  std::size_t n_;
  std::vector<std::int64_t> counts_;
};

}  // namespace fusionsam
