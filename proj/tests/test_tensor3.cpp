#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

using namespace cpdpm;

TEST_CASE("outer3 matches the triple-loop product")
{
    std::mt19937_64 rng(1);
    const Vectord a = oracle::random_vector(3, rng), b = oracle::random_vector(4, rng), c = oracle::random_vector(5, rng);
    const Tensor3d t = outer3(a, b, c);
    CHECK(t.dims() == Dims3{3, 4, 5});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t k = 0; k < 5; ++k)
                CHECK(t(i, j, k) - a[Eigen::Index(i)] * b[Eigen::Index(j)] * c[Eigen::Index(k)] == 0.0);
}

TEST_CASE("outer3 norm is the product of vector norms")
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Vectord a = oracle::random_vector(1 + trial % 5, rng), b = oracle::random_vector(2 + trial % 3, rng),
                      c = oracle::random_vector(1 + trial % 7, rng);
        const double expect = a.norm() * b.norm() * c.norm();
        CHECK(std::abs(frobenius_norm(outer3(a, b, c)) - expect) <= 1e-12 * expect);
    }
}

TEST_CASE("frobenius_norm matches direct summation")
{
    std::mt19937_64 rng(3);
    const Tensor3d t = oracle::random_tensor(3, 3, 3, rng);
    CHECK(frobenius_norm(t) == doctest::Approx(oracle::norm(oracle::from(t))).epsilon(1e-14));
    CHECK(frobenius_norm(Tensor3d(2, 2, 2)) == 0.0);
}

TEST_CASE("tensor_sub and tensor_add are elementwise")
{
    std::mt19937_64 rng(4);
    const Tensor3d x = oracle::random_tensor(2, 3, 4, rng), y = oracle::random_tensor(2, 3, 4, rng);
    const Tensor3d d = tensor_sub(x, y), s = tensor_add(x, y);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) {
                CHECK(d(i, j, k) == x(i, j, k) - y(i, j, k));
                CHECK(s(i, j, k) == x(i, j, k) + y(i, j, k));
            }
    CHECK_THROWS_AS(tensor_sub(x, Tensor3d(2, 3, 5)), std::invalid_argument);
}

TEST_CASE("Tensor3 rejects bad construction")
{
    CHECK_THROWS_AS(Tensor3d(0, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(Tensor3d(Dims3{2, 2, 2}, Vectord::Zero(7)), std::invalid_argument);
    Vectord bad = Vectord::Zero(8);
    bad[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Tensor3d(Dims3{2, 2, 2}, bad), std::invalid_argument);
}

TEST_CASE("unfold places elements at the documented columns")
{
    std::mt19937_64 rng(5);
    const Tensor3d t = oracle::random_tensor(2, 3, 4, rng);
    const Matrixd u0 = unfold(t, 0), u1 = unfold(t, 1), u2 = unfold(t, 2);
    CHECK(u0.rows() == 2);
    CHECK(u0.cols() == 12);
    CHECK(u1.rows() == 3);
    CHECK(u2.rows() == 4);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) {
                CHECK(u0(Eigen::Index(i), Eigen::Index(j * 4 + k)) == t(i, j, k));
                CHECK(u1(Eigen::Index(j), Eigen::Index(i * 4 + k)) == t(i, j, k));
                CHECK(u2(Eigen::Index(k), Eigen::Index(i * 3 + j)) == t(i, j, k));
            }
    CHECK_THROWS_AS(unfold(t, 3), std::invalid_argument);
}

TEST_CASE("unfold preserves norm and refold inverts it")
{
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor3d t = oracle::random_tensor(1 + trial % 4, 2 + trial % 3, 1 + trial % 5, rng);
        for (int mode = 0; mode < 3; ++mode) {
            const Matrixd u = unfold(t, mode);
            CHECK(u.norm() == doctest::Approx(frobenius_norm(t)).epsilon(1e-14));
            CHECK(refold(u, mode, t.dims()) == t);
        }
    }
    CHECK_THROWS_AS(refold(Matrixd::Zero(2, 5), 0, Dims3{2, 3, 4}), std::invalid_argument);
}

TEST_CASE("rank-1 tensor unfolds to a rank-1 matrix a (b kron c)^T")
{
    std::mt19937_64 rng(7);
    const Vectord a = oracle::random_vector(3, rng), b = oracle::random_vector(4, rng), c = oracle::random_vector(5, rng);
    const Matrixd u = unfold(outer3(a, b, c), 0);
    Vectord kron(20);
    for (Eigen::Index j = 0; j < 4; ++j)
        for (Eigen::Index k = 0; k < 5; ++k) kron[j * 5 + k] = b[j] * c[k];
    CHECK((u - a * kron.transpose()).norm() <= 1e-13 * u.norm());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(u);
    const auto s = svd.singularValues();
    CHECK(s[1] <= 1e-12 * s[0]);
}

TEST_CASE("khatri_rao columns are Kronecker products")
{
    std::mt19937_64 rng(8);
    Matrixd x(3, 2), y(4, 2);
    for (Eigen::Index i = 0; i < 3; ++i) x.row(i) = oracle::random_vector(2, rng).transpose();
    for (Eigen::Index i = 0; i < 4; ++i) y.row(i) = oracle::random_vector(2, rng).transpose();
    const Matrixd kr = khatri_rao(x, y);
    CHECK(kr.rows() == 12);
    for (Eigen::Index r = 0; r < 2; ++r)
        for (Eigen::Index a = 0; a < 3; ++a)
            for (Eigen::Index b = 0; b < 4; ++b) CHECK(kr(a * 4 + b, r) == x(a, r) * y(b, r));
    CHECK_THROWS_AS(khatri_rao(x, Matrixd::Zero(4, 3)), std::invalid_argument);
}
