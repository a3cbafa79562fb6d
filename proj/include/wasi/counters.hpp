#pragma once

#include <algorithm>
#include <cstdint>

#include "wasi/tensor.hpp"

namespace wasi {

/// Multiply/add and stored-element instrumentation. Multiplies and adds are
/// counted separately; FLOPs are reported as their sum (one multiply-add = 2).
struct FlopCounter {
    std::uint64_t muls = 0;
    std::uint64_t adds = 0;
    std::uint64_t peak_intermediate = 0;  // largest transient buffer, in elements

    void on_product(std::size_t m, std::size_t n, std::size_t k) {
        const std::uint64_t c = static_cast<std::uint64_t>(m) * n * k;
        muls += c;
        adds += c;
    }
    // axpy / dot / squared-norm over n elements: n multiplies, n adds
    void on_vector_op(std::size_t n) {
        muls += n;
        adds += n;
    }
    // dense SVD of an m x n matrix, charged at the Golub-Kahan textbook cost
    // 4*max*min^2 + 8*min^3, split evenly between multiplies and adds
    void on_svd(std::size_t m, std::size_t n) {
        const std::uint64_t lo = std::min(m, n), hi = std::max(m, n);
        const std::uint64_t c = 4 * hi * lo * lo + 8 * lo * lo * lo;
        muls += c / 2;
        adds += c - c / 2;
    }
    void on_intermediate(std::size_t elements) {
        peak_intermediate = std::max<std::uint64_t>(peak_intermediate, elements);
    }

    std::uint64_t total() const { return muls + adds; }
    void reset() { *this = FlopCounter{}; }
};

inline FlopCounter& flop_counter() {
    thread_local FlopCounter counter;
    return counter;
}

inline Matrix counted_product(const Matrix& a, const Matrix& b) {
    flop_counter().on_product(static_cast<std::size_t>(a.rows()),
                              static_cast<std::size_t>(b.cols()),
                              static_cast<std::size_t>(a.cols()));
    return a * b;
}

}  // namespace wasi
