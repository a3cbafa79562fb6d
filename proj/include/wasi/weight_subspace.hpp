#pragma once

#include <cmath>
#include <stdexcept>

#include "wasi/counters.hpp"
#include "wasi/linalg.hpp"

namespace wasi {

/// Order of the two factor updates inside one subspace-iteration step.
/// verbatim: R is computed from the previous basis, then L is re-orthogonalized.
/// refresh:  additionally recomputes R from the new orthonormal L, so the
///           reconstruction is an exact projection onto the updated basis.
enum class WsiOrder { verbatim, refresh };

enum class UpdateSign { descent, ascent };

/// Rank-K factorization (L: O x K, R: K x I) of one linear layer's weight,
/// maintained across training iterations.
struct LowRankWeight {
    Matrix L;
    Matrix R;
    std::size_t rank = 0;
    double epsilon = 1.0;
    long iteration = 0;

    std::size_t out_dim() const { return static_cast<std::size_t>(L.rows()); }
    std::size_t in_dim() const { return static_cast<std::size_t>(R.cols()); }
    std::size_t stored_elements() const {
        return static_cast<std::size_t>(L.size() + R.size());
    }
};

inline LowRankWeight wsi_init(const Matrix& w, double eps) {
    TruncatedSvd svd = truncated_svd(w, eps);
    LowRankWeight lr;
    lr.L = std::move(svd.L);
    lr.R = std::move(svd.R);
    lr.rank = svd.rank;
    lr.epsilon = eps;
    lr.iteration = 0;
    return lr;
}

inline LowRankWeight wsi_init_rank(const Matrix& w, std::size_t k) {
    TruncatedSvd svd = truncated_svd_rank(w, k);
    LowRankWeight lr;
    lr.L = std::move(svd.L);
    lr.R = std::move(svd.R);
    lr.rank = svd.rank;
    lr.epsilon = 1.0;
    lr.iteration = 0;
    return lr;
}

/// One warm-started subspace-iteration step on the effective weight.
/// The rank is held fixed; only the factors move.
inline LowRankWeight wsi_step(const Matrix& w_eff, const LowRankWeight& prev,
                              WsiOrder order = WsiOrder::verbatim) {
    if (static_cast<std::size_t>(w_eff.rows()) != prev.out_dim() ||
        static_cast<std::size_t>(w_eff.cols()) != prev.in_dim())
        throw std::invalid_argument("wsi_step: effective weight shape mismatch");

    LowRankWeight next;
    next.rank = prev.rank;
    next.epsilon = prev.epsilon;
    next.iteration = prev.iteration + 1;

    // R^T = W^T L_prev, then L = Orthogonalize(W R^T)
    next.R = counted_product(prev.L.transpose(), w_eff);  // K x I
    next.L = orthogonalize(counted_product(w_eff, next.R.transpose()));
    if (order == WsiOrder::refresh)
        next.R = counted_product(next.L.transpose(), w_eff);
    return next;
}

inline Matrix reconstruct(const LowRankWeight& lr) { return lr.L * lr.R; }

/// Effective weight after one update: L R -+ eta * grad. The descent sign is
/// the default; ascent preserves the literal form of the update equation.
inline Matrix apply_update(const LowRankWeight& lr, const Matrix& grad_w, double eta,
                           UpdateSign sign = UpdateSign::descent) {
    if (grad_w.rows() != lr.L.rows() || grad_w.cols() != lr.R.cols())
        throw std::invalid_argument("apply_update: gradient shape mismatch");
    if (!grad_w.allFinite())
        throw std::invalid_argument("apply_update: gradient has non-finite entries");
    if (eta <= 0.0) throw std::invalid_argument("apply_update: eta must be > 0");

    flop_counter().on_product(lr.out_dim(), lr.in_dim(), lr.rank);
    flop_counter().on_vector_op(lr.out_dim() * lr.in_dim());
    const double scale = (sign == UpdateSign::descent) ? -eta : eta;
    return lr.L * lr.R + scale * grad_w;
}

}  // namespace wasi
