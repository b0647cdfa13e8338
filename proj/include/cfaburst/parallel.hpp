#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace cfaburst {

inline int resolve_workers(int workers)
{
    if (workers > 0)
        return workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, n). Each i must write only its own slot so the
/// result is independent of scheduling; any order-sensitive reduction
/// happens afterwards, sequentially, in index order.
template <class Fn>
inline void parallel_for(int n, int workers, Fn&& fn)
{
    workers = std::min(resolve_workers(workers), n > 0 ? n : 1);
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += workers)
                fn(i);
        });
    for (auto& th : pool)
        th.join();
}

}  // namespace cfaburst
