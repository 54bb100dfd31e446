#pragma once

#include "cpdpm/cp_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace cpdpm {

struct AlsOptions
{
    int max_iterations = 200;
    /// Stop once the Frobenius residual drops below tolerance * ||t||_F.
    double tolerance = 1e-6;
    /// Random reinitializations on top of the first run.
    int restarts = 5;
    std::uint64_t seed = 0;
    /// Stop when a full sweep improves the residual by at most this * ||t||_F. Zero disables.
    double stall_tolerance = 1e-10;

    void validate() const
    {
        if (max_iterations < 1) throw std::invalid_argument("AlsOptions: max_iterations must be >= 1");
        if (!(tolerance > 0)) throw std::invalid_argument("AlsOptions: tolerance must be > 0");
        if (restarts < 0) throw std::invalid_argument("AlsOptions: restarts must be >= 0");
        if (stall_tolerance < 0) throw std::invalid_argument("AlsOptions: stall_tolerance must be >= 0");
    }
};

template <class Scalar>
struct AlsResult
{
    CPModel<Scalar> model;
    /// ||t - reconstruct(model)||_F, recomputed from the returned model.
    Scalar residual = 0;
    int iterations = 0;
    int best_run = 0;
    bool converged = false;
    /// Number of least-squares steps that needed the ridge fallback, summed over runs.
    int ridge_steps = 0;
};

/// Objective after initialization and after every factor update, one vector per run.
template <class Scalar>
using AlsTrace = std::vector<std::vector<Scalar>>;

namespace detail {

template <class Scalar>
Matrix<Scalar> random_factor(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Matrix<Scalar> f(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            f(i, j) = static_cast<Scalar>(uni(rng));
        }
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
        const Scalar nrm = f.col(j).norm();
        if (nrm > 0) f.col(j) /= nrm;
    }
    return f;
}

inline std::mt19937_64 run_rng(std::uint64_t seed, int run)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run)};
    return std::mt19937_64(seq);
}

// Solves X * gram = rhs for X (gram symmetric positive semidefinite).
template <class Scalar>
Matrix<Scalar> solve_gram(const Matrix<Scalar>& gram, const Matrix<Scalar>& rhs, int& ridge_steps)
{
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Dense g = gram;
    Eigen::LLT<Dense> llt(g);
    if (llt.info() != Eigen::Success || !(llt.rcond() > Scalar(1e-12))) {
        const Scalar tr = g.trace();
        const Scalar ridge = Scalar(1e-10) * (tr > 0 ? tr : Scalar(1));
        g.diagonal().array() += ridge;
        llt.compute(g);
        ++ridge_steps;
    }
    Dense rhs_t = rhs.transpose();
    return llt.solve(rhs_t).transpose();
}

template <class Scalar>
void normalize_columns(Matrix<Scalar>& f, Vector<Scalar>& weights)
{
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
        const Scalar nrm = f.col(j).norm();
        if (nrm > 0) {
            f.col(j) /= nrm;
            weights[j] = nrm;
        } else {
            f.col(j).setZero();
            f(0, j) = Scalar(1);
            weights[j] = 0;
        }
    }
}

template <class Scalar>
Scalar residual_norm(const Tensor3<Scalar>& t, const CPModel<Scalar>& m)
{
    return (t.data() - reconstruct(m).data()).norm();
}

template <class Scalar>
struct Unfoldings
{
    Matrix<Scalar> x0, x1, x2;
    explicit Unfoldings(const Tensor3<Scalar>& t) : x0(unfold(t, 0)), x1(unfold(t, 1)), x2(unfold(t, 2)) {}
};

/**
 * One ALS run from the given starting point. Each sweep updates A, then B,
 * then C by solving the exact least-squares problem for that factor with the
 * other two fixed, then renormalizes the updated factor into the weights.
 */
template <class Scalar>
AlsResult<Scalar> als_run(const Tensor3<Scalar>& t, const Unfoldings<Scalar>& unf, CPModel<Scalar> m,
                          const AlsOptions& opts, std::vector<Scalar>* trace)
{
    const Scalar tnorm = frobenius_norm(t);
    const Scalar goal = static_cast<Scalar>(opts.tolerance) * tnorm;
    const Scalar stall = static_cast<Scalar>(opts.stall_tolerance) * tnorm;

    AlsResult<Scalar> res;
    Scalar prev = residual_norm(t, m);
    if (trace) trace->push_back(prev);

    for (int it = 1; it <= opts.max_iterations; ++it) {
        Matrix<Scalar> ata = m.a.transpose() * m.a;
        Matrix<Scalar> btb = m.b.transpose() * m.b;
        Matrix<Scalar> ctc = m.c.transpose() * m.c;

        m.a = solve_gram<Scalar>(btb.cwiseProduct(ctc), unf.x0 * khatri_rao(m.b, m.c), res.ridge_steps);
        normalize_columns(m.a, m.weights);
        ata = m.a.transpose() * m.a;
        if (trace) trace->push_back(residual_norm(t, m));

        m.b = solve_gram<Scalar>(ata.cwiseProduct(ctc), unf.x1 * khatri_rao(m.a, m.c), res.ridge_steps);
        normalize_columns(m.b, m.weights);
        btb = m.b.transpose() * m.b;
        if (trace) trace->push_back(residual_norm(t, m));

        m.c = solve_gram<Scalar>(ata.cwiseProduct(btb), unf.x2 * khatri_rao(m.a, m.b), res.ridge_steps);
        normalize_columns(m.c, m.weights);

        const Scalar cur = residual_norm(t, m);
        if (trace) trace->push_back(cur);
        res.iterations = it;
        if (cur <= goal) {
            res.converged = true;
            break;
        }
        if (stall > 0 && std::abs(prev - cur) <= stall) break;
        prev = cur;
    }
    normalize(m);
    res.residual = residual_norm(t, m);
    res.model = std::move(m);
    return res;
}

}  // namespace detail

/**
 * Rank-`rank` CP decomposition by alternating least squares.
 *
 * Runs 1 + opts.restarts independent ALS runs and keeps the one with the
 * smallest residual (earliest run on ties). Run 0 starts from `warm_start`
 * when given: its scaled factors, padded with random columns up to `rank`.
 * Because the first A-update can reproduce the warm model exactly (zero
 * coefficients on the new columns), the result never has a larger residual
 * than the warm model, up to rounding. Other runs start from seeded
 * uniform(-1,1) factors. Fully deterministic for a fixed seed.
 */
template <class Scalar>
AlsResult<Scalar> cp_als(const Tensor3<Scalar>& t, std::size_t rank, const AlsOptions& opts,
                         const CPModel<Scalar>* warm_start = nullptr, AlsTrace<Scalar>* trace = nullptr)
{
    opts.validate();
    if (rank == 0 || rank > t.size()) {
        throw std::invalid_argument("cp_als: rank " + std::to_string(rank) + " outside [1, "
                                    + std::to_string(t.size()) + "]");
    }
    if (warm_start) {
        if (warm_start->dims() != t.dims()) throw std::invalid_argument("cp_als: warm start dims mismatch");
        if (warm_start->rank() > rank) throw std::invalid_argument("cp_als: warm start rank exceeds target rank");
    }

    const auto r = static_cast<Eigen::Index>(rank);
    const Dims3 d = t.dims();
    const detail::Unfoldings<Scalar> unf(t);
    if (trace) trace->clear();

    AlsResult<Scalar> best;
    bool have_best = false;
    int ridge_total = 0;
    for (int run = 0; run <= opts.restarts; ++run) {
        auto rng = detail::run_rng(opts.seed, run);
        CPModel<Scalar> init{Vector<Scalar>::Ones(r),
                             detail::random_factor<Scalar>(static_cast<Eigen::Index>(d.n), r, rng),
                             detail::random_factor<Scalar>(static_cast<Eigen::Index>(d.m), r, rng),
                             detail::random_factor<Scalar>(static_cast<Eigen::Index>(d.l), r, rng)};
        if (run == 0 && warm_start) {
            const auto w = static_cast<Eigen::Index>(warm_start->rank());
            init.a.leftCols(w) = warm_start->a * warm_start->weights.asDiagonal();
            init.b.leftCols(w) = warm_start->b;
            init.c.leftCols(w) = warm_start->c;
            init.weights.head(w).setOnes();
        }
        std::vector<Scalar>* run_trace = nullptr;
        if (trace) run_trace = &trace->emplace_back();
        AlsResult<Scalar> res = detail::als_run(t, unf, std::move(init), opts, run_trace);
        ridge_total += res.ridge_steps;
        res.best_run = run;
        if (!have_best || res.residual < best.residual) {
            best = std::move(res);
            have_best = true;
        }
    }
    best.ridge_steps = ridge_total;
    return best;
}

enum class RankCriterion
{
    /// ||f - CP(f,r)||_F < e * (r(N+M+L)/(NML))^2
    GainSquared,
    /// ||f - CP(f,r)||_F < e * ||f||_F
    RelativeResidual,
};

/// Rank at which the CP form costs as much as the dense filter: ceil(NML/(N+M+L)).
inline std::size_t break_even_rank(const Dims3& d)
{
    const std::size_t num = d.size();
    const std::size_t den = d.n + d.m + d.l;
    return (num + den - 1) / den;
}

template <class Scalar>
struct RankSelection
{
    std::size_t rank = 1;
    /// False when no rank up to the scan limit met the criterion; rank is then the limit.
    bool satisfied = false;
    /// residuals[r-1] is the residual of the rank-r fit, for every rank scanned.
    std::vector<Scalar> residuals;
    AlsResult<Scalar> fit;
};

template <class Scalar>
bool rank_criterion_met(Scalar residual, const Dims3& d, std::size_t r, double e, RankCriterion crit, Scalar tnorm)
{
    if (crit == RankCriterion::RelativeResidual) return residual < static_cast<Scalar>(e) * tnorm;
    const double ratio = static_cast<double>(r * (d.n + d.m + d.l)) / static_cast<double>(d.size());
    return static_cast<double>(residual) < e * ratio * ratio;
}

/**
 * Smallest rank r in [1, max_rank] whose ALS fit meets the criterion. Ranks
 * are scanned upward, each fit warm-started from the previous one, so the
 * residual sequence is non-increasing. max_rank defaults to the break-even
 * rank.
 */
template <class Scalar>
RankSelection<Scalar> select_rank(const Tensor3<Scalar>& t, double e, const AlsOptions& opts,
                                  RankCriterion crit = RankCriterion::GainSquared,
                                  std::optional<std::size_t> max_rank = std::nullopt)
{
    if (!(e > 0)) throw std::invalid_argument("select_rank: e must be > 0");
    const Dims3 d = t.dims();
    const std::size_t limit = std::min(max_rank.value_or(break_even_rank(d)), t.size());
    if (limit == 0) throw std::invalid_argument("select_rank: max_rank must be >= 1");
    const Scalar tnorm = frobenius_norm(t);

    RankSelection<Scalar> sel;
    for (std::size_t r = 1; r <= limit; ++r) {
        AlsResult<Scalar> fit = cp_als(t, r, opts, r > 1 ? &sel.fit.model : nullptr);
        sel.residuals.push_back(fit.residual);
        sel.fit = std::move(fit);
        sel.rank = r;
        if (rank_criterion_met(sel.fit.residual, d, r, e, crit, tnorm)) {
            sel.satisfied = true;
            break;
        }
    }
    return sel;
}

struct KRank
{
    int value = 0;
    /// False when the subset budget ran out; value is then a lower bound.
    bool exhaustive = true;
};

/**
 * Kruskal rank: the largest k such that every k columns are linearly
 * independent. Checked by enumerating column subsets of growing size; a
 * subset is independent when its smallest singular value exceeds
 * rel_tol times the largest column norm.
 */
template <class Derived>
KRank kruskal_rank(const Eigen::MatrixBase<Derived>& f, std::size_t subset_budget = 200000, double rel_tol = 1e-9)
{
    using Scalar = typename Derived::Scalar;
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const int cols = static_cast<int>(f.cols());
    const int max_k = static_cast<int>(std::min<Eigen::Index>(f.rows(), f.cols()));
    const Scalar scale = f.colwise().norm().maxCoeff();
    KRank out;
    if (cols == 0 || !(scale > 0)) return out;

    std::size_t tested = 0;
    for (int k = 1; k <= max_k; ++k) {
        std::vector<int> idx(static_cast<std::size_t>(k));
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            if (tested++ >= subset_budget) {
                out.exhaustive = false;
                return out;
            }
            Dense sub(f.rows(), k);
            for (int j = 0; j < k; ++j) sub.col(j) = f.col(idx[static_cast<std::size_t>(j)]);
            Eigen::JacobiSVD<Dense> svd(sub);
            if (!(svd.singularValues()(k - 1) > static_cast<Scalar>(rel_tol) * scale)) return out;
            // next combination
            int pos = k - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == cols - k + pos) --pos;
            if (pos < 0) break;
            ++idx[static_cast<std::size_t>(pos)];
            for (int j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
        out.value = k;
    }
    return out;
}

struct KruskalCheck
{
    KRank k_a, k_b, k_c;
    double bound = 0;  // 0.5*(kA+kB+kC) - 1
    std::size_t rank = 0;
    bool holds = false;
    /// All k-ranks exact. Otherwise they are lower bounds and `holds` is conservative.
    bool exhaustive() const { return k_a.exhaustive && k_b.exhaustive && k_c.exhaustive; }
};

/// Kruskal's sufficient condition for essential uniqueness: R <= (kA + kB + kC)/2 - 1.
template <class Scalar>
KruskalCheck kruskal_check(const CPModel<Scalar>& model, std::size_t subset_budget = 200000)
{
    KruskalCheck chk;
    chk.k_a = kruskal_rank(model.a, subset_budget);
    chk.k_b = kruskal_rank(model.b, subset_budget);
    chk.k_c = kruskal_rank(model.c, subset_budget);
    chk.rank = model.rank();
    chk.bound = 0.5 * (chk.k_a.value + chk.k_b.value + chk.k_c.value) - 1.0;
    chk.holds = static_cast<double>(chk.rank) <= chk.bound;
    return chk;
}

template <class Scalar>
bool kruskal_uniqueness_holds(const CPModel<Scalar>& model)
{
    return kruskal_check(model).holds;
}

}  // namespace cpdpm
