#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace avatar {

// Static-partition parallel for. Work items write to disjoint outputs; any
// cross-item reduction must happen afterwards in index order so results do
// not depend on the thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    int threads = std::max(1, std::min<int>(static_cast<int>(hw), n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            for (int i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace avatar
