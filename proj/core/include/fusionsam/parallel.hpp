#pragma once

#include <cstddef>
#include <functional>

namespace fusionsam {

// Upper bound on worker threads used inside kernels. Work is split over
// independent output elements only, so results do not depend on this value.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs fn(begin, end) over [0, n) in contiguous chunks.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace fusionsam
