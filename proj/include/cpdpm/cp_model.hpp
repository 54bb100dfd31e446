#pragma once

#include "cpdpm/tensor3.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace cpdpm {

/**
 * Rank-R canonical polyadic model  sum_r weights[r] * a_r (x) b_r (x) c_r.
 *
 * Factor columns have unit Euclidean norm; the weights carry the scale and
 * are kept in descending order of magnitude. That order is what "the first i
 * terms" means everywhere downstream (partial correlations, pruning
 * thresholds).
 */
template <class Scalar_>
struct CPModel
{
    using Scalar = Scalar_;

    Vector<Scalar> weights;
    Matrix<Scalar> a;  // n x R
    Matrix<Scalar> b;  // m x R
    Matrix<Scalar> c;  // l x R

    std::size_t rank() const { return static_cast<std::size_t>(weights.size()); }
    Dims3 dims() const
    {
        return {static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(b.rows()),
                static_cast<std::size_t>(c.rows())};
    }

    /// Factor storage in scalars: R*(n+m+l), the quantity in the gain formula.
    std::size_t factor_elements() const
    {
        const Dims3 d = dims();
        return rank() * (d.n + d.m + d.l);
    }

    /// Empty string when the model is well formed.
    std::string check(Scalar norm_tol = Scalar(1e-9)) const
    {
        const auto r = weights.size();
        if (r == 0) return "rank must be positive";
        if (a.cols() != r || b.cols() != r || c.cols() != r) return "factor column count differs from rank";
        if (a.rows() == 0 || b.rows() == 0 || c.rows() == 0) return "empty factor matrix";
        if (!weights.allFinite() || !a.allFinite() || !b.allFinite() || !c.allFinite()) return "non-finite entry";
        for (Eigen::Index j = 0; j < r; ++j) {
            for (const Matrix<Scalar>* f : {&a, &b, &c}) {
                if (std::abs(f->col(j).norm() - Scalar(1)) > norm_tol) {
                    return "factor column " + std::to_string(j) + " is not unit norm";
                }
            }
            if (j > 0 && std::abs(weights[j]) > std::abs(weights[j - 1])) return "weights not sorted by magnitude";
        }
        return {};
    }
};

using CPModeld = CPModel<double>;

/// Sum of weights[r] * outer3(a_r, b_r, c_r) over the first `terms` terms (all by default).
template <class Scalar>
Tensor3<Scalar> reconstruct(const CPModel<Scalar>& model, std::size_t terms = static_cast<std::size_t>(-1))
{
    const Dims3 d = model.dims();
    const auto r = static_cast<Eigen::Index>(std::min(terms, model.rank()));
    // The mode-0 unfolding (row-major) shares the tensor's flat layout.
    Matrix<Scalar> scaled_a = model.a.leftCols(r) * model.weights.head(r).asDiagonal();
    Matrix<Scalar> flat = scaled_a * khatri_rao(model.b.leftCols(r), model.c.leftCols(r)).transpose();
    return Tensor3<Scalar>(d, Eigen::Map<const Vector<Scalar>>(flat.data(), flat.size()));
}

/**
 * Moves all column norms into the weights and orders terms by descending
 * |weight|, ties kept in column order. Zero columns become the first unit
 * vector with zero weight.
 */
template <class Scalar>
void normalize(CPModel<Scalar>& model)
{
    const Eigen::Index r = model.weights.size();
    for (Eigen::Index j = 0; j < r; ++j) {
        for (Matrix<Scalar>* f : {&model.a, &model.b, &model.c}) {
            const Scalar nrm = f->col(j).norm();
            if (nrm > Scalar(0)) {
                f->col(j) /= nrm;
                model.weights[j] *= nrm;
            } else {
                f->col(j).setZero();
                (*f)(0, j) = Scalar(1);
                model.weights[j] = Scalar(0);
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
        return std::abs(model.weights[x]) > std::abs(model.weights[y]);
    });
    CPModel<Scalar> sorted{Vector<Scalar>(r), Matrix<Scalar>(model.a.rows(), r), Matrix<Scalar>(model.b.rows(), r),
                           Matrix<Scalar>(model.c.rows(), r)};
    for (Eigen::Index j = 0; j < r; ++j) {
        const auto src = order[static_cast<std::size_t>(j)];
        sorted.weights[j] = model.weights[src];
        sorted.a.col(j) = model.a.col(src);
        sorted.b.col(j) = model.b.col(src);
        sorted.c.col(j) = model.c.col(src);
    }
    model = std::move(sorted);
}

}  // namespace cpdpm
