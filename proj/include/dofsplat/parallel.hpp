// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>

#include <omp.h>

namespace dofsplat {

/// Worker count for data-parallel loops: DOFSPLAT_THREADS when set and positive, otherwise
/// the hardware concurrency.
inline int
threadCount() {
    if (const char *env = std::getenv("DOFSPLAT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) {
            return n;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n). Iterations must touch disjoint state.
template <typename Fn>
void
parallelFor(std::ptrdiff_t n, Fn &&fn) {
    const int threads = threadCount();
    if (threads <= 1 || n < 2) {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        fn(i);
    }
}

} // namespace dofsplat
