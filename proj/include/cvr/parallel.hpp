// Copyright 2026 The CVR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

namespace cvr {

/// Computes make(i) for i in [0, count) on `workers` threads and calls
/// sink(result) strictly in index order. At most 4 results per worker are
/// buffered ahead of the sink. The first exception stops the pool and is
/// rethrown once all threads have joined.
template <typename Make, typename Sink>
void ordered_parallel_for(std::uint64_t count, int workers, Make&& make, Sink&& sink) {
    workers = std::max(1, workers);
    if (workers == 1) {
        for (std::uint64_t i = 0; i < count; ++i) sink(make(i));
        return;
    }
    using Result = decltype(make(std::uint64_t{}));

    std::mutex m;
    std::condition_variable work_cv, done_cv;
    std::map<std::uint64_t, Result> ready;
    std::uint64_t next_claim = 0, next_emit = 0;
    const std::uint64_t window = 4 * static_cast<std::uint64_t>(workers);
    std::exception_ptr error;
    bool stop = false;

    auto worker = [&] {
        for (;;) {
            std::uint64_t i;
            {
                std::unique_lock lock(m);
                work_cv.wait(lock, [&] { return stop || next_claim >= count || next_claim < next_emit + window; });
                if (stop || next_claim >= count) return;
                i = next_claim++;
            }
            try {
                Result r = make(i);
                std::lock_guard lock(m);
                ready.emplace(i, std::move(r));
            } catch (...) {
                std::lock_guard lock(m);
                if (!error) error = std::current_exception();
                stop = true;
            }
            work_cv.notify_all();
            done_cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    try {
        while (next_emit < count) {
            std::unique_lock lock(m);
            done_cv.wait(lock, [&] { return error || ready.contains(next_emit); });
            if (error) break;
            auto node = ready.extract(next_emit);
            ++next_emit;
            lock.unlock();
            work_cv.notify_all();
            sink(std::move(node.mapped()));
        }
    } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
    }
    {
        std::lock_guard lock(m);
        stop = true;
    }
    work_cv.notify_all();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace cvr
