#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace rmlab {

/// Run body(i) for i in [0, n). Work items must be independent; outputs are
/// written into caller-owned slots indexed by i, so results do not depend on
/// the worker count. workers <= 1 runs inline.
template <class F>
void parallel_for(std::size_t n, int workers, F&& body) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
        pool.emplace_back([t, w, n, &body] {
            for (std::size_t i = t; i < n; i += w) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline int default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

} // namespace rmlab
