#pragma once

#include <stdexcept>
#include <vector>

#include "wasi/activation_subspace.hpp"
#include "wasi/counters.hpp"
#include "wasi/tensor.hpp"
#include "wasi/weight_subspace.hpp"

namespace wasi {

/// Per-layer context saved by the forward pass: the compressed input plus a
/// reference to the layer's weight factors.
struct LayerTape {
    TuckerActivation tucker;
    const LowRankWeight* weight = nullptr;
    std::vector<std::size_t> shape_in;
};

namespace detail {
inline void check_last_extent(const Tensor& a, std::size_t want, const char* who) {
    if (a.shape.back() != want)
        throw std::invalid_argument(std::string(who) + ": last extent " +
                                    std::to_string(a.shape.back()) + " does not match " +
                                    std::to_string(want));
}
inline Tensor with_last_extent(const Tensor& like, std::size_t last, const MatrixRowMajor& m) {
    std::vector<std::size_t> shape = like.shape;
    shape.back() = last;
    Tensor out(shape);
    Eigen::Map<MatrixRowMajor>(out.data.data(), m.rows(), m.cols()) = m;
    return out;
}
}  // namespace detail

/// Batched product over the last two dimensions: out[..., o] = sum_i a[..., i] w(o, i).
inline Tensor forward_dense(const Tensor& a, const Matrix& w) {
    detail::check_last_extent(a, static_cast<std::size_t>(w.cols()), "forward_dense");
    auto amat = last_mode_matrix(a);
    flop_counter().on_product(amat.rows(), w.rows(), w.cols());
    MatrixRowMajor out = amat * w.transpose();
    return detail::with_last_extent(a, static_cast<std::size_t>(w.rows()), out);
}

/// Low-rank forward (a R^T) L^T; only the (..., K) intermediate is materialized.
inline Tensor forward_lowrank(const Tensor& a, const LowRankWeight& lr) {
    detail::check_last_extent(a, lr.in_dim(), "forward_lowrank");
    auto amat = last_mode_matrix(a);
    flop_counter().on_product(amat.rows(), lr.rank, lr.in_dim());
    MatrixRowMajor mid = amat * lr.R.transpose();
    flop_counter().on_intermediate(static_cast<std::size_t>(mid.size()));
    flop_counter().on_product(amat.rows(), lr.out_dim(), lr.rank);
    MatrixRowMajor out = mid * lr.L.transpose();
    return detail::with_last_extent(a, lr.out_dim(), out);
}

/// dL/dW of shape O x I, summed over all batch/token positions.
inline Tensor grad_weight_dense(const Tensor& a, const Tensor& dy) {
    if (a.order() != dy.order())
        throw std::invalid_argument("grad_weight_dense: operand orders differ");
    for (std::size_t m = 0; m + 1 < a.order(); ++m)
        if (a.shape[m] != dy.shape[m])
            throw std::invalid_argument("grad_weight_dense: leading extents differ");
    auto amat = last_mode_matrix(a);
    auto dmat = last_mode_matrix(dy);
    flop_counter().on_product(dmat.cols(), amat.cols(), amat.rows());
    MatrixRowMajor g = dmat.transpose() * amat;
    const std::size_t o = dy.shape.back(), i = a.shape.back();
    Tensor out({o, i});
    Eigen::Map<MatrixRowMajor>(out.data.data(), g.rows(), g.cols()) = g;
    return out;
}

inline Matrix grad_weight_dense_matrix(const Tensor& a, const Tensor& dy) {
    Tensor g = grad_weight_dense(a, dy);
    return Eigen::Map<const MatrixRowMajor>(g.data.data(), g.shape[0], g.shape[1]);
}

/// dL/dA = dL/dA_{i+1} . W, dense path.
inline Tensor grad_input_dense(const Tensor& dy, const Matrix& w) {
    detail::check_last_extent(dy, static_cast<std::size_t>(w.rows()), "grad_input_dense");
    auto dmat = last_mode_matrix(dy);
    flop_counter().on_product(dmat.rows(), w.cols(), w.rows());
    MatrixRowMajor out = dmat * w;
    return detail::with_last_extent(dy, static_cast<std::size_t>(w.cols()), out);
}

/// dL/dA = (dy L) R; only the (..., K) intermediate is materialized.
inline Tensor grad_input_lowrank(const Tensor& dy, const LowRankWeight& lr) {
    detail::check_last_extent(dy, lr.out_dim(), "grad_input_lowrank");
    auto dmat = last_mode_matrix(dy);
    flop_counter().on_product(dmat.rows(), lr.rank, lr.out_dim());
    MatrixRowMajor mid = dmat * lr.L;
    flop_counter().on_intermediate(static_cast<std::size_t>(mid.size()));
    flop_counter().on_product(dmat.rows(), lr.in_dim(), lr.rank);
    MatrixRowMajor out = mid * lr.R;
    return detail::with_last_extent(dy, lr.in_dim(), out);
}

/// Weight gradient from a Tucker-compressed 3D activation, computed through
/// the staged contractions Z1..Z3; each stage is materialized so its cost is
/// counted separately.
inline Matrix grad_weight_lowrank_3d(const TuckerActivation& ta, const Tensor& dy) {
    if (ta.core.order() != 3 || dy.order() != 3)
        throw std::invalid_argument("grad_weight_lowrank_3d: operands must be order 3");
    const auto d = ta.dims();
    const std::size_t b = d[0], n = d[1], i_dim = d[2];
    if (dy.shape[0] != b || dy.shape[1] != n)
        throw std::invalid_argument("grad_weight_lowrank_3d: dy leading extents differ");
    for (std::size_t m = 0; m < 3; ++m)
        if (ta.ranks[m] != ta.core.extent(m))
            throw std::invalid_argument("grad_weight_lowrank_3d: core/rank mismatch");
    const std::size_t o_dim = dy.shape[2];
    const std::size_t r1 = ta.ranks[0], r2 = ta.ranks[1], r3 = ta.ranks[2];
    const Matrix& u1 = ta.factors[0];
    const Matrix& u2 = ta.factors[1];
    const Matrix& u3 = ta.factors[2];
    FlopCounter& fc = flop_counter();

    Tensor z1({n, o_dim, r1});
    for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t o = 0; o < o_dim; ++o)
            for (std::size_t q1 = 0; q1 < r1; ++q1) {
                double s = 0.0;
                for (std::size_t bb = 0; bb < b; ++bb)
                    s += dy(bb, nn, o) * u1(bb, q1);
                z1(nn, o, q1) = s;
            }
    fc.muls += b * n * o_dim * r1;
    fc.adds += b * n * o_dim * r1;
    fc.on_intermediate(z1.size());

    Tensor z2({r1, r3, n});
    for (std::size_t q1 = 0; q1 < r1; ++q1)
        for (std::size_t q3 = 0; q3 < r3; ++q3)
            for (std::size_t nn = 0; nn < n; ++nn) {
                double s = 0.0;
                for (std::size_t q2 = 0; q2 < r2; ++q2)
                    s += ta.core(q1, q2, q3) * u2(nn, q2);
                z2(q1, q3, nn) = s;
            }
    fc.muls += r1 * r2 * r3 * n;
    fc.adds += r1 * r2 * r3 * n;
    fc.on_intermediate(z2.size());

    Tensor z3({r1, i_dim, n});
    for (std::size_t q1 = 0; q1 < r1; ++q1)
        for (std::size_t ii = 0; ii < i_dim; ++ii)
            for (std::size_t nn = 0; nn < n; ++nn) {
                double s = 0.0;
                for (std::size_t q3 = 0; q3 < r3; ++q3)
                    s += z2(q1, q3, nn) * u3(ii, q3);
                z3(q1, ii, nn) = s;
            }
    fc.muls += r1 * r3 * i_dim * n;
    fc.adds += r1 * r3 * i_dim * n;
    fc.on_intermediate(z3.size());

    Matrix grad = Matrix::Zero(o_dim, i_dim);
    for (std::size_t o = 0; o < o_dim; ++o)
        for (std::size_t ii = 0; ii < i_dim; ++ii) {
            double s = 0.0;
            for (std::size_t nn = 0; nn < n; ++nn)
                for (std::size_t q1 = 0; q1 < r1; ++q1)
                    s += z1(nn, o, q1) * z3(q1, ii, nn);
            grad(o, ii) = s;
        }
    fc.muls += n * r1 * o_dim * i_dim;
    fc.adds += n * r1 * o_dim * i_dim;
    return grad;
}

/// 4D analogue over factors U1..U4; staging keeps the smallest intermediates
/// (contract the batch and width modes into dy, the r2/r4 modes into the core,
/// then join over h, r1, r3).
inline Matrix grad_weight_lowrank_4d(const TuckerActivation& ta, const Tensor& dy) {
    if (ta.core.order() != 4 || dy.order() != 4)
        throw std::invalid_argument("grad_weight_lowrank_4d: operands must be order 4");
    const auto d = ta.dims();
    const std::size_t b = d[0], h = d[1], w = d[2], i_dim = d[3];
    if (dy.shape[0] != b || dy.shape[1] != h || dy.shape[2] != w)
        throw std::invalid_argument("grad_weight_lowrank_4d: dy leading extents differ");
    const std::size_t o_dim = dy.shape[3];
    const std::size_t r1 = ta.ranks[0], r2 = ta.ranks[1], r3 = ta.ranks[2], r4 = ta.ranks[3];
    const Matrix& u1 = ta.factors[0];
    const Matrix& u2 = ta.factors[1];
    const Matrix& u3 = ta.factors[2];
    const Matrix& u4 = ta.factors[3];
    FlopCounter& fc = flop_counter();

    Tensor z1({r1, h, w, o_dim});
    for (std::size_t q1 = 0; q1 < r1; ++q1)
        for (std::size_t hh = 0; hh < h; ++hh)
            for (std::size_t ww = 0; ww < w; ++ww)
                for (std::size_t o = 0; o < o_dim; ++o) {
                    double s = 0.0;
                    for (std::size_t bb = 0; bb < b; ++bb)
                        s += dy(bb, hh, ww, o) * u1(bb, q1);
                    z1(q1, hh, ww, o) = s;
                }
    fc.muls += b * h * w * o_dim * r1;
    fc.adds += b * h * w * o_dim * r1;
    fc.on_intermediate(z1.size());

    Tensor z2({r1, h, r3, r4});
    for (std::size_t q1 = 0; q1 < r1; ++q1)
        for (std::size_t hh = 0; hh < h; ++hh)
            for (std::size_t q3 = 0; q3 < r3; ++q3)
                for (std::size_t q4 = 0; q4 < r4; ++q4) {
                    double s = 0.0;
                    for (std::size_t q2 = 0; q2 < r2; ++q2)
                        s += ta.core(q1, q2, q3, q4) * u2(hh, q2);
                    z2(q1, hh, q3, q4) = s;
                }
    fc.muls += r1 * r2 * r3 * r4 * h;
    fc.adds += r1 * r2 * r3 * r4 * h;
    fc.on_intermediate(z2.size());

    Tensor z3({r1, h, r3, o_dim});
    for (std::size_t q1 = 0; q1 < r1; ++q1)
        for (std::size_t hh = 0; hh < h; ++hh)
            for (std::size_t q3 = 0; q3 < r3; ++q3)
                for (std::size_t o = 0; o < o_dim; ++o) {
                    double s = 0.0;
                    for (std::size_t ww = 0; ww < w; ++ww)
                        s += z1(q1, hh, ww, o) * u3(ww, q3);
                    z3(q1, hh, q3, o) = s;
                }
    fc.muls += r1 * h * w * r3 * o_dim;
    fc.adds += r1 * h * w * r3 * o_dim;
    fc.on_intermediate(z3.size());

    Tensor z4({r1, h, i_dim, r3});
    for (std::size_t q1 = 0; q1 < r1; ++q1)
        for (std::size_t hh = 0; hh < h; ++hh)
            for (std::size_t ii = 0; ii < i_dim; ++ii)
                for (std::size_t q3 = 0; q3 < r3; ++q3) {
                    double s = 0.0;
                    for (std::size_t q4 = 0; q4 < r4; ++q4)
                        s += z2(q1, hh, q3, q4) * u4(ii, q4);
                    z4(q1, hh, ii, q3) = s;
                }
    fc.muls += r1 * h * r3 * r4 * i_dim;
    fc.adds += r1 * h * r3 * r4 * i_dim;
    fc.on_intermediate(z4.size());

    Matrix grad = Matrix::Zero(o_dim, i_dim);
    for (std::size_t o = 0; o < o_dim; ++o)
        for (std::size_t ii = 0; ii < i_dim; ++ii) {
            double s = 0.0;
            for (std::size_t hh = 0; hh < h; ++hh)
                for (std::size_t q1 = 0; q1 < r1; ++q1)
                    for (std::size_t q3 = 0; q3 < r3; ++q3)
                        s += z3(q1, hh, q3, o) * z4(q1, hh, ii, q3);
            grad(o, ii) = s;
        }
    fc.muls += h * r1 * r3 * o_dim * i_dim;
    fc.adds += h * r1 * r3 * o_dim * i_dim;
    return grad;
}

inline Matrix grad_weight_lowrank(const TuckerActivation& ta, const Tensor& dy) {
    return ta.core.order() == 4 ? grad_weight_lowrank_4d(ta, dy)
                                : grad_weight_lowrank_3d(ta, dy);
}

}  // namespace wasi
