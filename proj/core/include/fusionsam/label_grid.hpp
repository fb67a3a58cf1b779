#pragma once

#include <cstddef>
#include <vector>

namespace fusionsam {

// Row-major grid of integer class ids.
struct LabelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> ids;

  LabelGrid() = default;
  LabelGrid(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), ids(h * w, fill) {}

  int at(std::size_t r, std::size_t c) const { return ids[r * width + c]; }
  int& at(std::size_t r, std::size_t c) { return ids[r * width + c]; }
  std::size_t size() const { return ids.size(); }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

}  // namespace fusionsam
