#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wasi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::size_t shape_elements(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

/// Dense real tensor of order 1..4, row-major (last index fastest).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        validate_shape();
        data.assign(shape_elements(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        validate_shape();
        if (data.size() != shape_elements(shape))
            throw std::invalid_argument("tensor data length does not match shape");
    }

    std::size_t order() const { return shape.size(); }
    std::size_t extent(std::size_t mode) const { return shape.at(mode); }
    std::size_t size() const { return data.size(); }

    template <class... Ix>
    double& operator()(Ix... ix) {
        return data[flat_index({static_cast<std::size_t>(ix)...})];
    }
    template <class... Ix>
    double operator()(Ix... ix) const {
        return data[flat_index({static_cast<std::size_t>(ix)...})];
    }

    std::size_t flat_index(std::initializer_list<std::size_t> ix) const {
        if (ix.size() != shape.size())
            throw std::invalid_argument("tensor index arity mismatch");
        std::size_t off = 0;
        std::size_t m = 0;
        for (std::size_t i : ix) {
            off = off * shape[m] + i;
            ++m;
        }
        return off;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }

private:
    void validate_shape() const {
        if (shape.empty() || shape.size() > 4)
            throw std::invalid_argument("tensor order must be between 1 and 4");
        for (std::size_t e : shape)
            if (e == 0) throw std::invalid_argument("tensor extents must be >= 1");
    }
};

inline Tensor random_normal_tensor(const std::vector<std::size_t>& shape, std::mt19937_64& rng) {
    Tensor t(shape);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : t.data) v = dist(rng);
    return t;
}

inline Matrix random_normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
    return m;
}

/// Matrix view of a tensor collapsing all leading modes: (prod leading, last extent).
inline Eigen::Map<const MatrixRowMajor> last_mode_matrix(const Tensor& t) {
    const std::size_t cols = t.shape.back();
    return {t.data.data(), static_cast<Eigen::Index>(t.size() / cols),
            static_cast<Eigen::Index>(cols)};
}

/// Mode-m unfolding: rows index mode m, columns flatten the remaining modes
/// in ascending mode order, row-major. Modes are 0-based.
inline Matrix unfold(const Tensor& t, std::size_t mode) {
    if (mode >= t.order())
        throw std::invalid_argument("unfold: mode " + std::to_string(mode) +
                                    " out of range for order " + std::to_string(t.order()));
    const std::size_t rows = t.shape[mode];
    const std::size_t cols = t.size() / rows;
    Matrix m(rows, cols);

    const std::size_t n = t.order();
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t col = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == mode) continue;
            col = col * t.shape[k] + idx[k];
        }
        m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col)) = t.data[flat];
        for (std::size_t k = n; k-- > 0;) {
            if (++idx[k] < t.shape[k]) break;
            idx[k] = 0;
        }
    }
    return m;
}

/// Inverse of unfold for the same mode and target shape.
inline Tensor fold(const Matrix& m, std::size_t mode, const std::vector<std::size_t>& shape) {
    if (mode >= shape.size()) throw std::invalid_argument("fold: mode out of range");
    Tensor t(shape);
    if (static_cast<std::size_t>(m.rows()) != shape[mode] ||
        static_cast<std::size_t>(m.cols()) != t.size() / shape[mode])
        throw std::invalid_argument("fold: matrix shape does not match target shape");

    const std::size_t n = shape.size();
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t col = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == mode) continue;
            col = col * shape[k] + idx[k];
        }
        t.data[flat] = m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col));
        for (std::size_t k = n; k-- > 0;) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
    return t;
}

/// Mode product: contracts mode `mode` of t with the columns of m (Q x P_mode),
/// replacing that extent by Q.
inline Tensor mode_product(const Tensor& t, const Matrix& m, std::size_t mode) {
    if (mode >= t.order()) throw std::invalid_argument("mode_product: mode out of range");
    if (static_cast<std::size_t>(m.cols()) != t.shape[mode])
        throw std::invalid_argument("mode_product: matrix columns (" + std::to_string(m.cols()) +
                                    ") do not match extent " + std::to_string(t.shape[mode]));
    Matrix unf = unfold(t, mode);
    Matrix prod = m * unf;
    std::vector<std::size_t> out_shape = t.shape;
    out_shape[mode] = static_cast<std::size_t>(m.rows());
    return fold(prod, mode, out_shape);
}

}  // namespace wasi
