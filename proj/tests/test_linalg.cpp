#include <catch2/catch_amalgamated.hpp>

#include "wasi/linalg.hpp"

#include <random>

using namespace wasi;

TEST_CASE("orthogonalize keeps an already-orthonormal basis") {
    Matrix m = Matrix::Identity(4, 3);
    Matrix q = orthogonalize(m);
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(q.col(j).dot(m.col(j))) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("orthogonalize yields an orthonormal basis of a random full-rank matrix") {
    std::mt19937_64 rng(3);
    Matrix m = random_normal_matrix(8, 3, rng);
    Matrix q = orthogonalize(m);
    Matrix gram = q.transpose() * q;
    CHECK((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    // spans the input columns: projecting them onto the basis is lossless
    Matrix proj = q * (q.transpose() * m);
    CHECK((proj - m).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthogonalize replaces duplicated columns") {
    std::mt19937_64 rng(5);
    Matrix m = random_normal_matrix(6, 3, rng);
    m.col(2) = m.col(0);
    Matrix q = orthogonalize(m);
    Matrix gram = q.transpose() * q;
    CHECK((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthogonalize handles an all-zero column") {
    Matrix m = Matrix::Zero(5, 2);
    m(0, 0) = 2.0;
    Matrix q = orthogonalize(m);
    CHECK((q.transpose() * q - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("orthogonalize is deterministic") {
    std::mt19937_64 rng(17);
    Matrix m = random_normal_matrix(7, 4, rng);
    m.col(3) = m.col(1);  // force the re-randomization path
    Matrix q1 = orthogonalize(m);
    Matrix q2 = orthogonalize(m);
    CHECK((q1 - q2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("truncated_svd rank selection on diag(3,4)") {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 0) = 3.0;
    w(1, 1) = 4.0;
    // singular values {4,3}; explained variance {0.64, 0.36}
    auto a = truncated_svd(w, 0.6);
    CHECK(a.rank == 1);
    auto b = truncated_svd(w, 0.7);
    CHECK(b.rank == 2);
    Matrix recon1 = a.L * a.R;
    Matrix want = Matrix::Zero(2, 2);
    want(1, 1) = 4.0;
    CHECK((recon1 - want).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("truncated_svd of a rank-1 matrix") {
    std::mt19937_64 rng(23);
    Matrix u = random_normal_matrix(5, 1, rng);
    Matrix v = random_normal_matrix(4, 1, rng);
    Matrix w = u * v.transpose();
    auto t = truncated_svd(w, 0.2);
    CHECK(t.rank == 1);
    CHECK((t.L * t.R - w).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("truncated_svd with eps = 1 reproduces the matrix") {
    std::mt19937_64 rng(29);
    Matrix w = random_normal_matrix(6, 9, rng);
    auto t = truncated_svd(w, 1.0);
    CHECK(t.rank == 6);
    CHECK((t.L * t.R - w).norm() / w.norm() < 1e-9);
}

TEST_CASE("truncated_svd rank is monotone in eps and the error bound holds") {
    std::mt19937_64 rng(31);
    Matrix w = random_normal_matrix(8, 8, rng);
    std::size_t prev = 0;
    for (double eps : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
        auto t = truncated_svd(w, eps);
        CHECK(t.rank >= prev);
        prev = t.rank;
        const double rel2 = (w - t.L * t.R).squaredNorm() / w.squaredNorm();
        CHECK(rel2 <= 1.0 - eps + 1e-9);
    }
}

TEST_CASE("truncated_svd rejects the zero matrix") {
    CHECK_THROWS_AS(truncated_svd(Matrix::Zero(3, 3), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(truncated_svd(Matrix::Ones(3, 3), 1.5), std::invalid_argument);
}

TEST_CASE("finite_difference_gradient of sum of squares") {
    Tensor t({2}, {1.0, 2.0});
    auto f = [](const Tensor& x) {
        double s = 0.0;
        for (double v : x.data) s += v * v;
        return s;
    };
    Tensor g = finite_difference_gradient(f, t, 1e-5);
    CHECK(g.data[0] == Catch::Approx(2.0).margin(1e-6));
    CHECK(g.data[1] == Catch::Approx(4.0).margin(1e-6));
}

TEST_CASE("finite_difference_gradient is exact for linear functions") {
    std::mt19937_64 rng(37);
    Tensor t = random_normal_tensor({3, 2}, rng);
    std::vector<double> coeff;
    std::normal_distribution<double> dist;
    for (std::size_t i = 0; i < t.size(); ++i) coeff.push_back(dist(rng));
    auto f = [&coeff](const Tensor& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += coeff[i] * x.data[i];
        return s;
    };
    Tensor g = finite_difference_gradient(f, t, 1e-4);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(g.data[i] == Catch::Approx(coeff[i]).margin(1e-8));
}

TEST_CASE("finite_difference_gradient matches the analytic quadratic gradient") {
    std::mt19937_64 rng(41);
    Matrix a = random_normal_matrix(5, 4, rng);
    Tensor t = random_normal_tensor({4}, rng);
    auto f = [&a](const Tensor& x) {
        Vector v(4);
        for (int i = 0; i < 4; ++i) v(i) = x.data[i];
        return 0.5 * (a * v).squaredNorm();
    };
    Tensor g = finite_difference_gradient(f, t, 1e-5);
    Vector v(4);
    for (int i = 0; i < 4; ++i) v(i) = t.data[i];
    Vector want = a.transpose() * (a * v);
    for (int i = 0; i < 4; ++i)
        CHECK(g.data[i] == Catch::Approx(want(i)).margin(1e-5));
}
