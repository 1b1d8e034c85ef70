#pragma once

#include <exception>
#include <mutex>

namespace siggpde::detail {

// OpenMP loop over [0, n) that carries the first exception out of the region.
template <class Fn>
void parallel_for(long n, Fn&& fn) {
    std::exception_ptr err;
    std::mutex mu;
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace siggpde::detail
