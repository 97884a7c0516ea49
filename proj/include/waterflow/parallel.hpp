// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_PARALLEL_HPP
#define WATERFLOW_PARALLEL_HPP

// Per-item parallelism with results written by index, so output never
// depends on the worker count. WATERFLOW_THREADS caps the workers.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "waterflow/error.hpp"

namespace wf {

inline std::size_t thread_cap() {
    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("WATERFLOW_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) {
            throw ConfigError(std::string("WATERFLOW_THREADS must be a positive integer, got '") + env + "'");
        }
        cap = std::min(cap, static_cast<std::size_t>(v));
    }
    return cap;
}

// Runs fn(i) for i in [0, n). If any call throws, the exception of the
// lowest failing index is rethrown after all workers finish.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(thread_cap(), n);
    std::vector<std::exception_ptr> errors(n);
    auto run = [&](std::size_t first) {
        for (std::size_t i = first; i < n; i += std::max<std::size_t>(workers, 1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(run, w);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace wf

#endif
