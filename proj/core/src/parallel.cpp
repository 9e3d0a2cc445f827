#include "lutfuse/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace lutfuse {

int default_thread_count() {
    if (const char* env = std::getenv("LUTFUSE_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_rows(int rows, int threads, const std::function<void(int, int)>& fn) {
    threads = std::clamp(threads, 1, std::max(rows, 1));
    if (threads == 1) {
        fn(0, rows);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        const int begin = static_cast<int>(static_cast<long long>(rows) * t / threads);
        const int end = static_cast<int>(static_cast<long long>(rows) * (t + 1) / threads);
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
}

}  // namespace lutfuse
