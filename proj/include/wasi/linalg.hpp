#pragma once

#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "wasi/counters.hpp"
#include "wasi/tensor.hpp"

namespace wasi {

/// Modified Gram-Schmidt with one re-orthogonalization pass. A column whose
/// residual norm falls below 1e-12 times the input column norm is replaced by
/// a seeded random vector and re-orthogonalized, so the result always has
/// orthonormal columns spanning (at least) the column space of the input.
inline Matrix orthogonalize(const Matrix& m) {
    const Eigen::Index rows = m.rows(), cols = m.cols();
    if (rows < cols)
        throw std::invalid_argument("orthogonalize: need rows >= cols");

    Matrix q = m;
    std::mt19937_64 rng(0x5eedbeefULL);
    std::normal_distribution<double> dist(0.0, 1.0);
    FlopCounter& fc = flop_counter();

    for (Eigen::Index j = 0; j < cols; ++j) {
        const double input_norm = m.col(j).norm();
        fc.on_vector_op(static_cast<std::size_t>(rows));
        bool replaced = false;
        for (;;) {
            for (int pass = 0; pass < 2; ++pass) {
                for (Eigen::Index i = 0; i < j; ++i) {
                    const double proj = q.col(i).dot(q.col(j));
                    q.col(j) -= proj * q.col(i);
                    fc.on_vector_op(2 * static_cast<std::size_t>(rows));
                }
            }
            const double rnorm = q.col(j).norm();
            fc.on_vector_op(static_cast<std::size_t>(rows));
            const double floor = replaced ? 1e-12 * std::sqrt(double(rows)) : 1e-12 * input_norm;
            if (rnorm > floor && rnorm > 0.0) {
                q.col(j) /= rnorm;
                break;
            }
            // degenerate direction: re-randomize this column and retry
            for (Eigen::Index r = 0; r < rows; ++r) q(r, j) = dist(rng);
            replaced = true;
        }
    }
    return q;
}

struct TruncatedSvd {
    Matrix L;          // O x K,= U_K * Sigma_K
    Matrix R;          // K x I, = V_K^T
    std::size_t rank;  // K
};

/// Rank-K truncation of w where K is the smallest rank whose cumulative
/// explained variance (squared singular values over their total) reaches eps.
inline TruncatedSvd truncated_svd(const Matrix& w, double eps) {
    if (eps < 0.0 || eps > 1.0)
        throw std::invalid_argument("truncated_svd: eps must lie in [0, 1]");
    if (w.isZero(0.0))
        throw std::invalid_argument("truncated_svd: matrix is identically zero");

    flop_counter().on_svd(static_cast<std::size_t>(w.rows()),
                          static_cast<std::size_t>(w.cols()));
    Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
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

    TruncatedSvd out;
    out.rank = k;
    out.L = svd.matrixU().leftCols(k) * s.head(k).asDiagonal();
    out.R = svd.matrixV().leftCols(k).transpose();
    return out;
}

/// Rank-pinned variant of the truncation above.
inline TruncatedSvd truncated_svd_rank(const Matrix& w, std::size_t k) {
    if (k == 0 || k > static_cast<std::size_t>(std::min(w.rows(), w.cols())))
        throw std::invalid_argument("truncated_svd_rank: rank out of range");
    flop_counter().on_svd(static_cast<std::size_t>(w.rows()),
                          static_cast<std::size_t>(w.cols()));
    Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    TruncatedSvd out;
    out.rank = k;
    out.L = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal();
    out.R = svd.matrixV().leftCols(k).transpose();
    return out;
}

/// Central-difference gradient, entrywise (f(t+h e) - f(t-h e)) / (2h).
inline Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                         const Tensor& t, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    Tensor g(t.shape);
    Tensor probe = t;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + h;
        const double fp = f(probe);
        probe.data[i] = saved - h;
        const double fm = f(probe);
        probe.data[i] = saved;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace wasi
