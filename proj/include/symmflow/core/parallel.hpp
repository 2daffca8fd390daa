#pragma once

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace symmflow {

// Fork-join pool used for per-sample parallelism. Work items always write
// disjoint outputs and reductions sum fixed-size chunks in chunk order, so
// results are identical for any worker count (SYMMFLOW_THREADS overrides the
// default of std::thread::hardware_concurrency()).
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int num_threads() const { return static_cast<int>(workers_.size()) + 1; }

    // Runs fn(begin, end, slot) over a static partition of [0, n). slot is a
    // stable scratch index in [0, num_threads).
    void parallel_for(Eigen::Index n, const std::function<void(Eigen::Index, Eigen::Index, int)>& fn) {
        if (n <= 0) return;
        const int nt = num_threads();
        if (nt == 1 || n == 1) {
            fn(0, n, 0);
            return;
        }
        const int parts = static_cast<int>(std::min<Eigen::Index>(nt, n));
        const Eigen::Index base = n / parts, rem = n % parts;
        std::vector<std::function<void()>> tasks;
        tasks.reserve(static_cast<std::size_t>(parts));
        Eigen::Index at = 0;
        for (int p = 0; p < parts; ++p) {
            Eigen::Index len = base + (p < rem ? 1 : 0);
            Eigen::Index b = at, e = at + len;
            at = e;
            tasks.push_back([&fn, b, e, p] { fn(b, e, p); });
        }
        run_tasks(tasks);
    }

    // Runs fn(chunk_index, begin, end) for fixed-size chunks of [0, n).
    // Chunk boundaries depend only on chunk_size, never on the worker count.
    void parallel_chunks(Eigen::Index n, Eigen::Index chunk_size,
                         const std::function<void(Eigen::Index, Eigen::Index, Eigen::Index)>& fn) {
        if (n <= 0) return;
        if (chunk_size <= 0) chunk_size = n;
        const Eigen::Index nchunks = (n + chunk_size - 1) / chunk_size;
        std::vector<std::function<void()>> tasks;
        tasks.reserve(static_cast<std::size_t>(nchunks));
        for (Eigen::Index ci = 0; ci < nchunks; ++ci) {
            Eigen::Index b = ci * chunk_size;
            Eigen::Index e = std::min(n, b + chunk_size);
            tasks.push_back([&fn, ci, b, e] { fn(ci, b, e); });
        }
        run_tasks(tasks);
    }

private:
    ThreadPool() {
        int nt = 0;
        if (const char* env = std::getenv("SYMMFLOW_THREADS")) nt = std::atoi(env);
        if (nt <= 0) nt = static_cast<int>(std::thread::hardware_concurrency());
        if (nt <= 0) nt = 1;
        for (int i = 0; i < nt - 1; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    void worker_loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [this] { return stop_ || next_ < queue_.size(); });
                if (stop_) return;
                task = std::move(queue_[next_++]);
            }
            task();
            {
                std::lock_guard<std::mutex> lk(mu_);
                if (++done_ == queue_.size()) done_cv_.notify_one();
            }
        }
    }

    void run_tasks(std::vector<std::function<void()>>& tasks) {
        if (tasks.size() == 1) {
            tasks[0]();
            return;
        }
        {
            std::lock_guard<std::mutex> lk(mu_);
            queue_ = std::move(tasks);
            next_ = 0;
            done_ = 0;
        }
        cv_.notify_all();
        // main thread pulls work too
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (next_ >= queue_.size()) break;
                task = std::move(queue_[next_++]);
            }
            task();
            {
                std::lock_guard<std::mutex> lk(mu_);
                ++done_;
            }
        }
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return done_ == queue_.size(); });
        queue_.clear();
    }

    std::vector<std::thread> workers_;
    std::vector<std::function<void()>> queue_;
    std::size_t next_ = 0;
    std::size_t done_ = 0;
    bool stop_ = false;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
};

inline void parallel_for(Eigen::Index n, const std::function<void(Eigen::Index, Eigen::Index, int)>& fn) {
    ThreadPool::instance().parallel_for(n, fn);
}

inline void parallel_chunks(Eigen::Index n, Eigen::Index chunk_size,
                            const std::function<void(Eigen::Index, Eigen::Index, Eigen::Index)>& fn) {
    ThreadPool::instance().parallel_chunks(n, chunk_size, fn);
}

}  // namespace symmflow
