//*****************************************************************************
// Copyright 2026 The momentum_sync Authors
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
//*****************************************************************************

#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace momentum_sync
{

/*!
 * Fixed set of threads running index-parallel loops between barriers.
 *
 * for_each(n, fn) calls fn(i) once for every i in [0, n) and returns when all
 * calls finished. Thread k handles i = k, k + P, k + 2P, ...; callers keep
 * determinism by writing only to slot i. The first exception by index is
 * rethrown on the calling thread.
 */
class WorkerPool
{
  public:
    explicit WorkerPool(std::size_t threads = 1)
    {
        const std::size_t extra = threads > 1 ? threads - 1 : 0;
        workers_.reserve(extra);
        for (std::size_t k = 1; k <= extra; ++k)
            workers_.emplace_back([this, k] { worker_loop(k); });
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    ~WorkerPool()
    {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        wake_.notify_all();
        for (auto& t : workers_)
            t.join();
    }

    std::size_t size() const noexcept { return workers_.size() + 1; }

    void for_each(std::size_t n, const std::function<void(std::size_t)>& fn)
    {
        if (workers_.empty() || n <= 1)
        {
            for (std::size_t i = 0; i < n; ++i)
                fn(i);
            return;
        }
        std::vector<std::exception_ptr> errors(n);
        {
            std::lock_guard lock(mutex_);
            fn_ = &fn;
            n_ = n;
            errors_ = &errors;
            remaining_ = workers_.size();
            ++generation_;
        }
        wake_.notify_all();
        run_share(0, fn, n, errors);
        {
            std::unique_lock lock(mutex_);
            done_.wait(lock, [this] { return remaining_ == 0; });
            fn_ = nullptr;
            errors_ = nullptr;
        }
        for (auto& e : errors)
            if (e)
                std::rethrow_exception(e);
    }

  private:
    void run_share(std::size_t k, const std::function<void(std::size_t)>& fn, std::size_t n,
                   std::vector<std::exception_ptr>& errors)
    {
        for (std::size_t i = k; i < n; i += size())
        {
            try
            {
                fn(i);
            }
            catch (...)
            {
                errors[i] = std::current_exception();
            }
        }
    }

    void worker_loop(std::size_t k)
    {
        std::size_t seen = 0;
        for (;;)
        {
            const std::function<void(std::size_t)>* fn = nullptr;
            std::size_t n = 0;
            std::vector<std::exception_ptr>* errors = nullptr;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_)
                    return;
                seen = generation_;
                fn = fn_;
                n = n_;
                errors = errors_;
            }
            run_share(k, *fn, n, *errors);
            {
                std::lock_guard lock(mutex_);
                --remaining_;
            }
            done_.notify_one();
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t n_ = 0;
    std::vector<std::exception_ptr>* errors_ = nullptr;
    std::size_t remaining_ = 0;
    std::size_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace momentum_sync
