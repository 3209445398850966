#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace lvseg {

// Worker count for data-parallel loops. Set once from the CLI (--jobs);
// defaults to the hardware count. Results never depend on the value: every
// parallel_for task owns a disjoint output range and performs its own
// reductions in fixed index order.
int get_jobs();
void set_jobs(int jobs);

// Runs fn(i) for i in [0, n). Tasks are split into contiguous chunks.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Runs fn(begin, end) over a contiguous partition of [0, n).
void parallel_for_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace lvseg
