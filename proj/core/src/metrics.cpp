#include "fusionsam/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fusionsam/error.hpp"

namespace fusionsam {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes < 2) throw ConfigError("confusion matrix needs at least 2 classes");
}

void ConfusionMatrix::add(const LabelGrid& prediction, const LabelGrid& label) {
  if (prediction.height != label.height || prediction.width != label.width) {
    throw DimensionError("confusion matrix: prediction and label grids differ in size");
  }
  for (std::size_t i = 0; i < label.size(); ++i) {
    const int l = label.ids[i], p = prediction.ids[i];
    if (l < 0 || p < 0 || static_cast<std::size_t>(l) >= n_ || static_cast<std::size_t>(p) >= n_) {
      throw ConfigError("confusion matrix: class id outside [0," + std::to_string(n_) + ")");
    }
    ++counts_[static_cast<std::size_t>(l) * n_ + static_cast<std::size_t>(p)];
  }
}

IouReport ConfusionMatrix::report(bool include_background) const {
  IouReport r;
  r.per_class.assign(n_, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  for (std::size_t c = 0; c < n_; ++c) {
    std::int64_t row = 0, col = 0;
    for (std::size_t k = 0; k < n_; ++k) {
      row += at(c, k);
      col += at(k, c);
    }
    const std::int64_t tp = at(c, c);
    const std::int64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    if (c == 0 && !include_background) continue;
    total += r.per_class[c];
    ++r.classes_counted;
  }
  r.miou = r.classes_counted > 0 ? total / static_cast<double>(r.classes_counted) : 0.0;
  return r;
}

}  // namespace fusionsam
