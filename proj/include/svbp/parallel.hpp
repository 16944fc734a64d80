#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace svbp {

// Static block partition over [0, n). Work items must be independent and
// write disjoint outputs; results are then identical for any worker count.
template <typename Fn>
void parallel_for(int n, int num_threads, Fn&& fn) {
    if (n <= 0) return;
    if (num_threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(num_threads, n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace svbp
