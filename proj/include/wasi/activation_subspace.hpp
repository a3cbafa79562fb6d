#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "wasi/counters.hpp"
#include "wasi/linalg.hpp"
#include "wasi/tensor.hpp"

namespace wasi {

/// Tucker approximation of one activation tensor: core of shape (r_1..r_n)
/// plus one orthonormal factor per mode (D_m x r_m).
struct TuckerActivation {
    Tensor core;
    std::vector<Matrix> factors;
    std::vector<std::size_t> ranks;
    long epoch = 0;

    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d;
        d.reserve(factors.size());
        for (const Matrix& u : factors) d.push_back(static_cast<std::size_t>(u.rows()));
        return d;
    }

    std::size_t stored_elements() const {
        std::size_t n = core.size();
        for (const Matrix& u : factors) n += static_cast<std::size_t>(u.size());
        return n;
    }
};

inline void check_ranks_in_bounds(const Tensor& a, const std::vector<std::size_t>& ranks) {
    if (ranks.size() != a.order())
        throw std::invalid_argument("rank vector length does not match tensor order");
    for (std::size_t m = 0; m < a.order(); ++m) {
        const std::size_t rows = a.extent(m);
        const std::size_t cols = a.size() / rows;
        if (ranks[m] < 1 || ranks[m] > std::min(rows, cols))
            throw std::invalid_argument("mode " + std::to_string(m) + " rank " +
                                        std::to_string(ranks[m]) + " out of bounds");
    }
}

/// One (warm-started) subspace-iteration sweep producing a Tucker
/// approximation of `a`. With no previous state each mode starts from a
/// seeded i.i.d. standard normal sketch; otherwise the previous factors are
/// reused as V = A_m^T U_prev.
inline TuckerActivation asi_step(const Tensor& a, const std::vector<std::size_t>& ranks,
                                 const TuckerActivation* prev, std::uint64_t seed) {
    check_ranks_in_bounds(a, ranks);
    if (prev) {
        if (prev->ranks != ranks)
            throw std::invalid_argument("asi_step: rank vector differs from previous state");
        if (prev->dims() != a.shape)
            throw std::invalid_argument("asi_step: tensor shape differs from previous state");
    }

    TuckerActivation out;
    out.ranks = ranks;
    out.epoch = prev ? prev->epoch + 1 : 0;
    out.factors.reserve(a.order());

    std::mt19937_64 rng(seed);
    Tensor core = a;
    for (std::size_t m = 0; m < a.order(); ++m) {
        Matrix unf = unfold(a, m);
        Matrix v;
        if (prev) {
            v = counted_product(unf.transpose(), prev->factors[m]);
        } else {
            v = random_normal_matrix(static_cast<std::size_t>(unf.cols()), ranks[m], rng);
        }
        Matrix u = orthogonalize(counted_product(unf, v));
        // project: core <- core x_m U^T
        flop_counter().on_product(ranks[m], core.size() / core.extent(m), core.extent(m));
        core = mode_product(core, u.transpose(), m);
        out.factors.push_back(std::move(u));
    }
    out.core = std::move(core);
    return out;
}

/// Per-mode truncated SVD of each unfolding at the given ranks.
inline TuckerActivation hosvd(const Tensor& a, const std::vector<std::size_t>& ranks) {
    check_ranks_in_bounds(a, ranks);
    if (a.frobenius_norm() == 0.0)
        throw std::invalid_argument("hosvd: tensor is identically zero");

    TuckerActivation out;
    out.ranks = ranks;
    out.factors.reserve(a.order());
    Tensor core = a;
    for (std::size_t m = 0; m < a.order(); ++m) {
        Matrix unf = unfold(a, m);
        flop_counter().on_svd(static_cast<std::size_t>(unf.rows()),
                              static_cast<std::size_t>(unf.cols()));
        Eigen::JacobiSVD<Matrix> svd(unf, Eigen::ComputeThinU);
        Matrix u = svd.matrixU().leftCols(ranks[m]);
        flop_counter().on_product(ranks[m], core.size() / core.extent(m), core.extent(m));
        core = mode_product(core, u.transpose(), m);
        out.factors.push_back(std::move(u));
    }
    out.core = std::move(core);
    return out;
}

/// HOSVD with mode ranks chosen by the explained-variance rule at threshold
/// eps (smallest rank whose cumulative squared-singular-value share reaches eps).
inline TuckerActivation hosvd(const Tensor& a, double eps) {
    if (eps <= 0.0 || eps > 1.0)
        throw std::invalid_argument("hosvd: eps must lie in (0, 1]");
    if (a.frobenius_norm() == 0.0)
        throw std::invalid_argument("hosvd: tensor is identically zero");

    std::vector<std::size_t> ranks(a.order());
    for (std::size_t m = 0; m < a.order(); ++m) {
        Matrix unf = unfold(a, m);
        Eigen::JacobiSVD<Matrix> svd(unf);
        const Vector& s = svd.singularValues();
        const double total = s.squaredNorm();
        std::size_t k = static_cast<std::size_t>(s.size());
        double cum = 0.0;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            cum += s(j) * s(j) / total;
            if (cum >= eps - 1e-12) {
                k = static_cast<std::size_t>(j) + 1;
                break;
            }
        }
        ranks[m] = k;
    }
    return hosvd(a, ranks);
}

inline Tensor reconstruct_tucker(const TuckerActivation& ta) {
    Tensor t = ta.core;
    for (std::size_t m = 0; m < ta.factors.size(); ++m) {
        flop_counter().on_product(static_cast<std::size_t>(ta.factors[m].rows()),
                                  t.size() / t.extent(m), t.extent(m));
        t = mode_product(t, ta.factors[m], m);
    }
    return t;
}

}  // namespace wasi
