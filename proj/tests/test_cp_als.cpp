#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cpdpm/cp_als.hpp"
#include "oracles.hpp"

#include <algorithm>

using namespace cpdpm;

namespace {

CPModeld random_model(std::size_t n, std::size_t m, std::size_t l, std::size_t r, std::mt19937_64& rng)
{
    const auto R = static_cast<Eigen::Index>(r);
    CPModeld model{oracle::random_vector(R, rng).cwiseAbs(), Matrixd(Eigen::Index(n), R), Matrixd(Eigen::Index(m), R),
                   Matrixd(Eigen::Index(l), R)};
    for (Matrixd* f : {&model.a, &model.b, &model.c})
        for (Eigen::Index j = 0; j < R; ++j) f->col(j) = oracle::random_vector(f->rows(), rng);
    return model;
}

}  // namespace

TEST_CASE("reconstruct matches term-by-term summation")
{
    std::mt19937_64 rng(11);
    const CPModeld m = random_model(3, 4, 5, 3, rng);
    const oracle::Cube o = oracle::cp_sum(m, 3);
    const Tensor3d t = reconstruct(m);
    double err = 0;
    for (std::size_t i = 0; i < t.size(); ++i) err = std::max(err, std::abs(t.data()[Eigen::Index(i)] - o.v[i]));
    CHECK(err <= 1e-12 * oracle::norm(o));

    CPModeld one = random_model(2, 3, 4, 1, rng);
    one.weights[0] = 1;
    const Tensor3d direct = outer3(one.a.col(0), one.b.col(0), one.c.col(0));
    CHECK(frobenius_norm(tensor_sub(reconstruct(one), direct)) <= 1e-14 * frobenius_norm(direct));

    CPModeld zero = random_model(2, 3, 4, 2, rng);
    zero.weights.setZero();
    CHECK(frobenius_norm(reconstruct(zero)) == 0.0);
}

TEST_CASE("reconstruct is invariant under column rescaling")
{
    std::mt19937_64 rng(12);
    const CPModeld m = random_model(4, 3, 5, 3, rng);
    const Tensor3d ref = reconstruct(m);
    CPModeld p = m;
    p.b.col(1) *= 3.5;
    p.weights[1] /= 3.5;
    p.c.col(2) *= -0.25;
    p.weights[2] /= -0.25;
    CHECK(frobenius_norm(tensor_sub(reconstruct(p), ref)) <= 1e-13 * frobenius_norm(ref));
    normalize(p);
    CHECK(p.check().empty());
    CHECK(frobenius_norm(tensor_sub(reconstruct(p), ref)) <= 1e-13 * frobenius_norm(ref));
}

TEST_CASE("exact rank-1 input is recovered")
{
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor3d t = outer3(oracle::random_vector(3 + trial % 4, rng), oracle::random_vector(4, rng),
                                  oracle::random_vector(2 + trial % 6, rng));
        const AlsResult<double> r = cp_als(t, 1, AlsOptions{.seed = std::uint64_t(trial)});
        CHECK(r.residual <= 1e-8 * frobenius_norm(t));
        CHECK(r.model.check().empty());
    }
}

TEST_CASE("two orthogonal terms with weights 2 and 1 are recovered")
{
    std::mt19937_64 rng(14);
    auto orthonormal = [&](Eigen::Index n) {
        Matrixd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(n, n)).householderQ();
        return Matrixd(q.leftCols(2));
    };
    const Matrixd a = orthonormal(4), b = orthonormal(5), c = orthonormal(6);
    const Tensor3d t = tensor_add(outer3(Vectord(2 * a.col(0)), b.col(0), c.col(0)), outer3(a.col(1), b.col(1), c.col(1)));
    const AlsResult<double> r = cp_als(t, 2, AlsOptions{.tolerance = 1e-12, .seed = 3});
    std::vector<double> w{std::abs(r.model.weights[0]), std::abs(r.model.weights[1])};
    std::sort(w.rbegin(), w.rend());
    CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-6));
    // align the leading term by factor correlation
    for (Eigen::Index r0 = 0; r0 < 2; ++r0) {
        const Eigen::Index match = std::abs(r.model.a.col(r0).dot(a.col(0))) > std::abs(r.model.a.col(r0).dot(a.col(1)))
                                       ? 0
                                       : 1;
        CHECK(std::abs(r.model.a.col(r0).dot(a.col(match))) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(r.model.weights[r0]) == doctest::Approx(match == 0 ? 2.0 : 1.0).epsilon(1e-6));
    }
}

TEST_CASE("weights come out sorted by magnitude with unit columns")
{
    std::mt19937_64 rng(15);
    const Tensor3d t = oracle::random_tensor(4, 5, 6, rng);
    const AlsResult<double> r = cp_als(t, 5, AlsOptions{.restarts = 1});
    CHECK(r.model.check(1e-12).empty());
    CHECK(r.residual == doctest::Approx(frobenius_norm(tensor_sub(t, reconstruct(r.model)))).epsilon(1e-14));
}

TEST_CASE("residual at rank 16 does not exceed rank 15 under warm start")
{
    std::mt19937_64 rng(16);
    const Tensor3d t = oracle::random_tensor(4, 4, 4, rng);
    const AlsOptions opts{.restarts = 2, .seed = 9};
    const AlsResult<double> r15 = cp_als(t, 15, opts);
    const AlsResult<double> r16 = cp_als(t, 16, opts, &r15.model);
    CHECK(r16.residual <= r15.residual + 1e-9 * frobenius_norm(t));
}

TEST_CASE("residuals are non-increasing along a warm-started rank scan")
{
    std::mt19937_64 rng(17);
    const Tensor3d t = oracle::random_tensor(5, 6, 7, rng);
    const AlsOptions opts{.max_iterations = 80, .restarts = 1, .seed = 2};
    AlsResult<double> prev = cp_als(t, 1, opts);
    for (std::size_t r = 2; r <= 10; ++r) {
        AlsResult<double> next = cp_als(t, r, opts, &prev.model);
        CHECK(next.residual <= prev.residual + 1e-9 * frobenius_norm(t));
        prev = std::move(next);
    }
}

TEST_CASE("objective never increases within a sweep")
{
    std::mt19937_64 rng(18);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor3d t = oracle::random_tensor(3 + trial % 3, 4, 2 + trial % 5, rng);
        AlsTrace<double> trace;
        cp_als(t, 1 + std::size_t(trial % 4), AlsOptions{.max_iterations = 30, .restarts = 2, .seed = std::uint64_t(trial)},
               static_cast<const CPModeld*>(nullptr), &trace);
        CHECK(trace.size() == 3);
        for (const auto& run : trace)
            for (std::size_t i = 1; i < run.size(); ++i) CHECK(run[i] <= run[i - 1] * (1 + 1e-9));
    }
}

TEST_CASE("fixed seed gives bit-identical models")
{
    std::mt19937_64 rng(19);
    const Tensor3d t = oracle::random_tensor(5, 4, 6, rng);
    const AlsResult<double> x = cp_als(t, 4, AlsOptions{.seed = 77});
    const AlsResult<double> y = cp_als(t, 4, AlsOptions{.seed = 77});
    CHECK(x.model.weights == y.model.weights);
    CHECK(x.model.a == y.model.a);
    CHECK(x.model.b == y.model.b);
    CHECK(x.model.c == y.model.c);
    CHECK(x.residual == y.residual);
}

TEST_CASE("cp_als rejects invalid ranks and options")
{
    const Tensor3d t(2, 2, 2);
    CHECK_THROWS_AS(cp_als(t, 0, AlsOptions{}), std::invalid_argument);
    CHECK_THROWS_AS(cp_als(t, 9, AlsOptions{}), std::invalid_argument);
    CHECK_THROWS_AS(cp_als(t, 1, AlsOptions{.tolerance = 0}), std::invalid_argument);
    CHECK_THROWS_AS(cp_als(t, 1, AlsOptions{.max_iterations = 0}), std::invalid_argument);
}

TEST_CASE("degenerate input takes the ridge path without failing")
{
    const Tensor3d zero(3, 3, 3);
    const AlsResult<double> r = cp_als(zero, 2, AlsOptions{.restarts = 0});
    CHECK(r.residual == 0.0);
    CHECK(r.model.weights.allFinite());

    std::mt19937_64 rng(20);
    const Tensor3d rank1 = outer3(oracle::random_vector(3, rng), oracle::random_vector(3, rng), oracle::random_vector(3, rng));
    const AlsResult<double> over = cp_als(rank1, 4, AlsOptions{.restarts = 0});
    CHECK(over.residual <= 1e-6 * frobenius_norm(rank1));
    CHECK(over.model.a.allFinite());
}

TEST_CASE("break_even_rank is the ceiling of NML/(N+M+L)")
{
    CHECK(break_even_rank({8, 8, 32}) == 43);  // 2048/48 = 42.67
    CHECK(break_even_rank({5, 11, 32}) == 37);  // 1760/48 = 36.67
    CHECK(break_even_rank({2, 2, 2}) == 2);
}

TEST_CASE("select_rank trivial cases")
{
    std::mt19937_64 rng(21);
    const Tensor3d r1 = outer3(oracle::random_vector(4, rng), oracle::random_vector(4, rng), oracle::random_vector(8, rng));
    CHECK(select_rank(r1, 1.0, AlsOptions{}).rank == 1);
    const RankSelection<double> z = select_rank(Tensor3d(3, 3, 3), 1.0, AlsOptions{});
    CHECK(z.rank == 1);
    CHECK(z.satisfied);
    CHECK_THROWS_AS(select_rank(r1, 0.0, AlsOptions{}), std::invalid_argument);
}

TEST_CASE("select_rank agrees with an explicit linear scan")
{
    std::mt19937_64 rng(22);
    const Tensor3d t = oracle::random_tensor(8, 8, 32, rng);
    const double e = 10 * frobenius_norm(t);
    const AlsOptions opts{.max_iterations = 40, .restarts = 1, .seed = 5};
    const RankSelection<double> sel = select_rank(t, e, opts);

    std::size_t expect = 0;
    AlsResult<double> prev;
    for (std::size_t r = 1; r <= break_even_rank(t.dims()); ++r) {
        AlsResult<double> fit = cp_als(t, r, opts, r > 1 ? &prev.model : nullptr);
        const double ratio = double(r * 48) / 2048.0;
        if (fit.residual < e * ratio * ratio) {
            expect = r;
            break;
        }
        prev = std::move(fit);
    }
    REQUIRE(expect > 0);
    CHECK(sel.satisfied);
    CHECK(sel.rank == expect);
    CHECK(sel.residuals.size() == expect);
}

TEST_CASE("select_rank reports an unmet criterion at the scan limit")
{
    std::mt19937_64 rng(23);
    const Tensor3d t = oracle::random_tensor(3, 3, 3, rng);
    const RankSelection<double> sel =
        select_rank(t, 1e-12, AlsOptions{.restarts = 0}, RankCriterion::RelativeResidual, std::size_t{2});
    CHECK_FALSE(sel.satisfied);
    CHECK(sel.rank == 2);
}

TEST_CASE("Kruskal rank by subset enumeration")
{
    Matrixd id = Matrixd::Zero(3, 2);
    id(0, 0) = 1;
    id(1, 1) = 1;
    CHECK(kruskal_rank(id).value == 2);
    CPModeld m{Vectord::Ones(2), id, id, id};
    const KruskalCheck k = kruskal_check(m);
    CHECK(k.bound == 2.0);
    CHECK(k.holds);
    CHECK(kruskal_uniqueness_holds(m));

    Matrixd dup = id;
    dup.col(1) = dup.col(0);
    CHECK(kruskal_rank(dup).value == 1);
    CHECK_FALSE(kruskal_uniqueness_holds(CPModeld{Vectord::Ones(2), dup, id, id}));

    // three columns in the plane: every pair independent, the triple is not
    Matrixd plane(3, 3);
    plane << 1, 0, 1, 0, 1, 1, 0, 0, 0;
    CHECK(kruskal_rank(plane).value == 2);
}

TEST_CASE("Kruskal bound for a single term follows the inequality literally")
{
    std::mt19937_64 rng(24);
    CPModeld one = random_model(3, 3, 3, 1, rng);
    normalize(one);
    const KruskalCheck k = kruskal_check(one);
    CHECK(k.k_a.value == 1);
    CHECK(k.bound == 0.5);
    CHECK_FALSE(k.holds);  // 1 <= 0.5 is false
}

TEST_CASE("Kruskal budget exhaustion yields a lower bound")
{
    std::mt19937_64 rng(25);
    CPModeld m = random_model(6, 6, 6, 5, rng);
    const KRank k = kruskal_rank(m.a, 3);
    CHECK_FALSE(k.exhaustive);
    CHECK(k.value <= kruskal_rank(m.a).value);
}
