#pragma once

#include "cpdpm/cp_model.hpp"

#include <cstdint>
#include <optional>

namespace cpdpm {

/// Feature map: height (axis 0) x width (axis 1) x channels (axis 2).
template <class Scalar>
using FeatureMap = Tensor3<Scalar>;
using FeatureMapd = FeatureMap<double>;

/**
 * Valid-support correlation scores, plus the multiplication count that
 * produced them.
 *
 * `multiplications` follows the accounting convention used throughout the
 * library: a dense filter costs n*m*l per output position, a CP term costs
 * n+m+l per output position, the weight being folded into the last pass.
 * `executed_multiplications` is what the loops really did; separable passes
 * reuse intermediate planes that extend past the valid support, so it is a
 * little larger than the convention count for CP maps.
 */
template <class Scalar_>
struct ScoreMap
{
    using Scalar = Scalar_;
    Matrix<Scalar> values;  // H' x W'
    std::uint64_t multiplications = 0;
    std::uint64_t executed_multiplications = 0;

    Eigen::Index height() const { return values.rows(); }
    Eigen::Index width() const { return values.cols(); }
    Scalar operator()(Eigen::Index y, Eigen::Index x) const { return values(y, x); }
};

using ScoreMapd = ScoreMap<double>;

enum class PassOrder
{
    /// channels, then rows (axis 0), then columns (axis 1)
    ChannelFirst,
    /// columns, then rows, then channels
    ColumnFirst,
};

struct CorrelateOptions
{
    PassOrder order = PassOrder::ChannelFirst;
    /// Tally multiplications inside the loops instead of by closed form (slow; for verification).
    bool count_in_loops = false;
};

struct ValidSupport
{
    std::size_t height = 0;
    std::size_t width = 0;
};

inline ValidSupport valid_support(const Dims3& img, const Dims3& filt)
{
    if (filt.l != img.l) {
        throw std::invalid_argument("channel mismatch: image " + to_string(img) + ", filter " + to_string(filt));
    }
    if (filt.n > img.n || filt.m > img.m) {
        throw std::invalid_argument("filter " + to_string(filt) + " does not fit image " + to_string(img));
    }
    return {img.n - filt.n + 1, img.m - filt.m + 1};
}

/// H'W' * nml
inline std::uint64_t dense_multiplications(const Dims3& img, const Dims3& filt)
{
    const ValidSupport v = valid_support(img, filt);
    return static_cast<std::uint64_t>(v.height) * v.width * filt.size();
}

/// rank * H'W' * (n+m+l)
inline std::uint64_t cp_multiplications(const Dims3& img, const Dims3& filt, std::size_t rank)
{
    const ValidSupport v = valid_support(img, filt);
    return static_cast<std::uint64_t>(rank) * v.height * v.width * (filt.n + filt.m + filt.l);
}

/// Loop count of the channel-first separable engine: per term HWl + H'Wn + H'W'm + m.
inline std::uint64_t cp_executed_multiplications(const Dims3& img, const Dims3& filt, std::size_t rank)
{
    const ValidSupport v = valid_support(img, filt);
    const std::uint64_t per = static_cast<std::uint64_t>(img.n) * img.m * img.l
                              + static_cast<std::uint64_t>(v.height) * img.m * filt.n
                              + static_cast<std::uint64_t>(v.height) * v.width * filt.m + filt.m;
    return rank * per;
}

/// score(y,x) = sum_{i,j,k} filt(i,j,k) * img(y+i, x+j, k)
template <class Scalar>
ScoreMap<Scalar> correlate3_full(const FeatureMap<Scalar>& img, const Tensor3<Scalar>& filt,
                                 const CorrelateOptions& opts = {})
{
    const ValidSupport v = valid_support(img.dims(), filt.dims());
    const auto H = static_cast<Eigen::Index>(v.height);
    const auto W = static_cast<Eigen::Index>(v.width);
    const auto n = static_cast<Eigen::Index>(filt.n());
    const auto row_len = static_cast<Eigen::Index>(filt.m() * filt.l());
    const auto img_row = static_cast<Eigen::Index>(img.m() * img.l());
    const auto L = static_cast<Eigen::Index>(img.l());

    ScoreMap<Scalar> out;
    out.values.resize(H, W);
    std::uint64_t count = 0;
    for (Eigen::Index y = 0; y < H; ++y) {
        for (Eigen::Index x = 0; x < W; ++x) {
            Scalar acc = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const Scalar* f = filt.raw() + i * row_len;
                const Scalar* p = img.raw() + (y + i) * img_row + x * L;
                if (opts.count_in_loops) {
                    for (Eigen::Index q = 0; q < row_len; ++q) {
                        acc += f[q] * p[q];
                        ++count;
                    }
                } else {
                    acc += Eigen::Map<const Vector<Scalar>>(f, row_len).dot(Eigen::Map<const Vector<Scalar>>(p, row_len));
                }
            }
            out.values(y, x) = acc;
        }
    }
    out.multiplications = opts.count_in_loops ? count : dense_multiplications(img.dims(), filt.dims());
    out.executed_multiplications = out.multiplications;
    return out;
}

namespace detail {

struct Tally
{
    bool enabled = false;
    std::uint64_t convention = 0;
    std::uint64_t executed = 0;
};

// Adds weight * term_r to `acc` (H' x W'), channel pass first.
template <class Scalar>
void add_cp_term_channel_first(const FeatureMap<Scalar>& img, const CPModel<Scalar>& model, Eigen::Index r,
                               Matrix<Scalar>& plane, Matrix<Scalar>& rows_pass, Matrix<Scalar>& acc, Tally& tally)
{
    const auto H = static_cast<Eigen::Index>(img.n());
    const auto W = static_cast<Eigen::Index>(img.m());
    const auto L = static_cast<Eigen::Index>(img.l());
    const Eigen::Index Hv = acc.rows();
    const Eigen::Index Wv = acc.cols();
    const Eigen::Index n = model.a.rows();
    const Eigen::Index m = model.b.rows();

    const Vector<Scalar> c = model.c.col(r);
    const Vector<Scalar> a = model.a.col(r);
    const Vector<Scalar> wb = model.weights[r] * model.b.col(r);
    if (tally.enabled) tally.executed += static_cast<std::uint64_t>(m);

    // plane(y,x) = sum_k img(y,x,k) c[k]
    Eigen::Map<Vector<Scalar>>(plane.data(), H * W).noalias() = Eigen::Map<const Matrix<Scalar>>(img.raw(), H * W, L) * c;
    if (tally.enabled) {
        for (Eigen::Index y = 0; y < H; ++y) {
            for (Eigen::Index x = 0; x < W; ++x) {
                tally.executed += static_cast<std::uint64_t>(L);
                if (y < Hv && x < Wv) tally.convention += static_cast<std::uint64_t>(L);
            }
        }
    }
    // rows_pass(y,x) = sum_i a[i] plane(y+i, x)
    for (Eigen::Index y = 0; y < Hv; ++y) {
        rows_pass.row(y) = a[0] * plane.row(y);
        for (Eigen::Index i = 1; i < n; ++i) rows_pass.row(y) += a[i] * plane.row(y + i);
        if (tally.enabled) {
            tally.executed += static_cast<std::uint64_t>(W * n);
            tally.convention += static_cast<std::uint64_t>(Wv * n);
        }
    }
    // acc(y,x) += sum_j (w b[j]) rows_pass(y, x+j)
    for (Eigen::Index y = 0; y < Hv; ++y) {
        auto s = (wb[0] * rows_pass.row(y).head(Wv)).eval();
        for (Eigen::Index j = 1; j < m; ++j) s += wb[j] * rows_pass.row(y).segment(j, Wv);
        acc.row(y) += s;
        if (tally.enabled) {
            tally.executed += static_cast<std::uint64_t>(Wv * m);
            tally.convention += static_cast<std::uint64_t>(Wv * m);
        }
    }
}

// Same term, contracting columns first, then rows, then channels.
template <class Scalar>
void add_cp_term_column_first(const FeatureMap<Scalar>& img, const CPModel<Scalar>& model, Eigen::Index r,
                              Matrix<Scalar>& acc)
{
    const auto W = static_cast<Eigen::Index>(img.m());
    const auto L = static_cast<Eigen::Index>(img.l());
    const auto H = static_cast<Eigen::Index>(img.n());
    const Eigen::Index Hv = acc.rows();
    const Eigen::Index Wv = acc.cols();
    const Eigen::Index n = model.a.rows();
    const Eigen::Index m = model.b.rows();

    // cols(y, x, :) = sum_j b[j] img(y, x+j, :)
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(H * Wv, L);
    for (Eigen::Index y = 0; y < H; ++y) {
        for (Eigen::Index x = 0; x < Wv; ++x) {
            for (Eigen::Index j = 0; j < m; ++j) {
                cols.row(y * Wv + x) += model.b(j, r) * Eigen::Map<const Vector<Scalar>>(img.raw() + (y * W + x + j) * L, L).transpose();
            }
        }
    }
    const Vector<Scalar> wc = model.weights[r] * model.c.col(r);
    for (Eigen::Index y = 0; y < Hv; ++y) {
        for (Eigen::Index x = 0; x < Wv; ++x) {
            Vector<Scalar> rowsum = Vector<Scalar>::Zero(L);
            for (Eigen::Index i = 0; i < n; ++i) rowsum += model.a(i, r) * cols.row((y + i) * Wv + x).transpose();
            acc(y, x) += rowsum.dot(wc);
        }
    }
}

}  // namespace detail

/**
 * Correlation with a CP model as a sum of separable terms: for each of the
 * first `upto_rank` terms, three chained 1D passes (see PassOrder), weighted
 * and accumulated. Equals correlate3_full(img, reconstruct(model, upto_rank))
 * up to rounding.
 */
template <class Scalar>
ScoreMap<Scalar> correlate3_cp(const FeatureMap<Scalar>& img, const CPModel<Scalar>& model,
                               std::optional<std::size_t> upto_rank = std::nullopt, const CorrelateOptions& opts = {})
{
    const std::size_t terms = upto_rank.value_or(model.rank());
    if (terms == 0 || terms > model.rank()) {
        throw std::invalid_argument("correlate3_cp: upto_rank " + std::to_string(terms) + " outside [1, "
                                    + std::to_string(model.rank()) + "]");
    }
    const Dims3 fd = model.dims();
    const ValidSupport v = valid_support(img.dims(), fd);
    const auto Hv = static_cast<Eigen::Index>(v.height);
    const auto Wv = static_cast<Eigen::Index>(v.width);

    ScoreMap<Scalar> out;
    out.values = Matrix<Scalar>::Zero(Hv, Wv);
    detail::Tally tally{opts.count_in_loops};
    if (opts.order == PassOrder::ChannelFirst) {
        Matrix<Scalar> plane(static_cast<Eigen::Index>(img.n()), static_cast<Eigen::Index>(img.m()));
        Matrix<Scalar> rows_pass(Hv, static_cast<Eigen::Index>(img.m()));
        for (std::size_t r = 0; r < terms; ++r) {
            detail::add_cp_term_channel_first(img, model, static_cast<Eigen::Index>(r), plane, rows_pass, out.values,
                                              tally);
        }
    } else {
        for (std::size_t r = 0; r < terms; ++r) {
            detail::add_cp_term_column_first(img, model, static_cast<Eigen::Index>(r), out.values);
        }
    }
    if (opts.count_in_loops && opts.order == PassOrder::ChannelFirst) {
        out.multiplications = tally.convention;
        out.executed_multiplications = tally.executed;
    } else {
        out.multiplications = cp_multiplications(img.dims(), fd, terms);
        out.executed_multiplications = cp_executed_multiplications(img.dims(), fd, terms);
    }
    return out;
}

/// N*M*L / (R*(N+M+L)): speed and storage gain of a rank-R CP filter over the dense one.
inline double theoretical_gain(std::size_t n, std::size_t m, std::size_t l, std::size_t rank)
{
    if (n == 0 || m == 0 || l == 0 || rank == 0) throw std::invalid_argument("theoretical_gain: arguments must be positive");
    return static_cast<double>(n * m * l) / static_cast<double>(rank * (n + m + l));
}

/**
 * Ratio of the multiplication counters reported by correlate3_full and
 * correlate3_cp when run on an image of `img` dims with a filter of `filt`
 * dims at the given rank.
 */
inline double measured_gain(const Dims3& img, const Dims3& filt, std::size_t rank)
{
    const FeatureMapd probe(img);
    const Tensor3d dense(filt);
    CPModeld cp{Vectord::Ones(static_cast<Eigen::Index>(rank)),
                Matrixd::Zero(static_cast<Eigen::Index>(filt.n), static_cast<Eigen::Index>(rank)),
                Matrixd::Zero(static_cast<Eigen::Index>(filt.m), static_cast<Eigen::Index>(rank)),
                Matrixd::Zero(static_cast<Eigen::Index>(filt.l), static_cast<Eigen::Index>(rank))};
    const std::uint64_t full = correlate3_full(probe, dense).multiplications;
    const std::uint64_t sep = correlate3_cp(probe, cp).multiplications;
    return static_cast<double>(full) / static_cast<double>(sep);
}

}  // namespace cpdpm
