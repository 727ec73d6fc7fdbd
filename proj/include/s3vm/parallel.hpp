/**
 * @file parallel.hpp
 * @brief Minimal fork-join loop over independent tasks.
 */

#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

#include "s3vm/common.hpp"

namespace s3vm {

/// Runs fn(0..count-1) on up to `workers` threads; serial when workers <= 1.
inline void parallel_for(Index count, int workers, const std::function<void(Index)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (Index i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    auto body = [&] {
        for (Index i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> threads;
    const int spawn = std::min<int>(workers, static_cast<int>(count));
    threads.reserve(static_cast<std::size_t>(spawn) - 1);
    for (int t = 1; t < spawn; ++t) threads.emplace_back(body);
    body();
    for (auto& th : threads) th.join();
}

}  // namespace s3vm
