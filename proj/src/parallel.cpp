#include "lvseg/parallel.hpp"

#include <algorithm>
#include <atomic>

namespace lvseg {

namespace {
std::atomic<int> g_jobs{0};

int resolve_default() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}
}  // namespace

int get_jobs() {
    int j = g_jobs.load();
    return j > 0 ? j : resolve_default();
}

void set_jobs(int jobs) { g_jobs.store(jobs); }

void parallel_for_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t jobs = static_cast<std::size_t>(std::max(1, get_jobs()));
    jobs = std::min(jobs, n);
    if (jobs == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    std::size_t chunk = (n + jobs - 1) / jobs;
    for (std::size_t t = 0; t < jobs; ++t) {
        std::size_t begin = t * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& th : threads) th.join();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    parallel_for_ranges(n, [&fn](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace lvseg
