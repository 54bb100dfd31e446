#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpdpm {

template <class Scalar_>
using Vector = Eigen::Matrix<Scalar_, Eigen::Dynamic, 1>;

// Factor matrices and unfoldings are row-major.
template <class Scalar_>
using Matrix = Eigen::Matrix<Scalar_, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dims3
{
    std::size_t n = 0;  // axis 0
    std::size_t m = 0;  // axis 1
    std::size_t l = 0;  // axis 2

    std::size_t size() const { return n * m * l; }
    std::size_t operator[](int axis) const { return axis == 0 ? n : axis == 1 ? m : l; }
    friend bool operator==(const Dims3&, const Dims3&) = default;
};

inline std::string to_string(const Dims3& d)
{
    return std::to_string(d.n) + "x" + std::to_string(d.m) + "x" + std::to_string(d.l);
}

/**
 * Dense order-3 tensor.
 *
 * Storage is axis-major: axis 0 slowest, axis 2 fastest, so element (i,j,k)
 * lives at flat index (i*m + j)*l + k. Every other routine in the library
 * (unfoldings, Khatri-Rao products, correlation kernels, the T3F format)
 * relies on this layout.
 */
template <class Scalar_>
class Tensor3
{
public:
    using Scalar = Scalar_;

    Tensor3() = default;

    explicit Tensor3(Dims3 dims) : dims_(dims), data_(Vector<Scalar>::Zero(static_cast<Eigen::Index>(dims.size())))
    {
        check_dims(dims);
    }

    Tensor3(std::size_t n, std::size_t m, std::size_t l) : Tensor3(Dims3{n, m, l}) {}

    Tensor3(Dims3 dims, Vector<Scalar> data) : dims_(dims), data_(std::move(data))
    {
        check_dims(dims);
        if (static_cast<std::size_t>(data_.size()) != dims.size()) {
            throw std::invalid_argument("Tensor3: data length " + std::to_string(data_.size())
                                        + " does not match dims " + to_string(dims));
        }
        if (!data_.allFinite()) {
            throw std::invalid_argument("Tensor3: non-finite element");
        }
    }

    const Dims3& dims() const { return dims_; }
    std::size_t n() const { return dims_.n; }
    std::size_t m() const { return dims_.m; }
    std::size_t l() const { return dims_.l; }
    std::size_t size() const { return dims_.size(); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * dims_.m + j) * dims_.l + k; }

    Scalar& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
    Scalar operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[index(i, j, k)]; }

    const Vector<Scalar>& data() const { return data_; }
    Vector<Scalar>& data() { return data_; }
    const Scalar* raw() const { return data_.data(); }
    Scalar* raw() { return data_.data(); }

    template <class Other>
    Tensor3<Other> cast() const
    {
        return Tensor3<Other>(dims_, data_.template cast<Other>());
    }

    friend bool operator==(const Tensor3& a, const Tensor3& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

private:
    static void check_dims(const Dims3& d)
    {
        if (d.n == 0 || d.m == 0 || d.l == 0) {
            throw std::invalid_argument("Tensor3: extents must be positive, got " + to_string(d));
        }
    }

    Dims3 dims_{};
    Vector<Scalar> data_;
};

using Tensor3d = Tensor3<double>;
using Vectord = Vector<double>;
using Matrixd = Matrix<double>;

/// result(i,j,k) = a[i] * b[j] * c[k]
template <class DerivedA, class DerivedB, class DerivedC>
auto outer3(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
            const Eigen::MatrixBase<DerivedC>& c)
{
    using Scalar = typename DerivedA::Scalar;
    if (a.size() == 0 || b.size() == 0 || c.size() == 0) {
        throw std::invalid_argument("outer3: empty vector");
    }
    Tensor3<Scalar> t(static_cast<std::size_t>(a.size()), static_cast<std::size_t>(b.size()),
                      static_cast<std::size_t>(c.size()));
    Scalar* out = t.raw();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        for (Eigen::Index j = 0; j < b.size(); ++j) {
            const Scalar ab = a[i] * b[j];
            for (Eigen::Index k = 0; k < c.size(); ++k) {
                *out++ = ab * c[k];
            }
        }
    }
    return t;
}

template <class Scalar>
Scalar frobenius_norm(const Tensor3<Scalar>& t)
{
    return t.data().norm();
}

template <class Scalar>
Tensor3<Scalar> tensor_sub(const Tensor3<Scalar>& x, const Tensor3<Scalar>& y)
{
    if (x.dims() != y.dims()) {
        throw std::invalid_argument("tensor_sub: dimension mismatch " + to_string(x.dims()) + " vs "
                                    + to_string(y.dims()));
    }
    return Tensor3<Scalar>(x.dims(), x.data() - y.data());
}

template <class Scalar>
Tensor3<Scalar> tensor_add(const Tensor3<Scalar>& x, const Tensor3<Scalar>& y)
{
    if (x.dims() != y.dims()) {
        throw std::invalid_argument("tensor_add: dimension mismatch " + to_string(x.dims()) + " vs "
                                    + to_string(y.dims()));
    }
    return Tensor3<Scalar>(x.dims(), x.data() + y.data());
}

namespace detail {

inline void check_mode(int mode)
{
    if (mode < 0 || mode > 2) {
        throw std::invalid_argument("invalid mode " + std::to_string(mode) + ", expected 0, 1 or 2");
    }
}

// Column of the mode-k unfolding that holds element (i,j,k).
inline std::size_t unfold_col(const Dims3& d, int mode, std::size_t i, std::size_t j, std::size_t k)
{
    switch (mode) {
        case 0: return j * d.l + k;
        case 1: return i * d.l + k;
        default: return i * d.m + j;
    }
}

}  // namespace detail

/**
 * Mode-k unfolding. Rows index axis k; columns run over the two remaining
 * axes in ascending axis order with the later axis varying fastest:
 *   mode 0: col = j*l + k,  mode 1: col = i*l + k,  mode 2: col = i*m + j.
 * With this ordering unfold(T, 0) = A diag(w) khatri_rao(B, C)^T for a CP
 * model, and analogously for modes 1 (A, C) and 2 (A, B).
 */
template <class Scalar>
Matrix<Scalar> unfold(const Tensor3<Scalar>& t, int mode)
{
    detail::check_mode(mode);
    const Dims3& d = t.dims();
    const auto rows = static_cast<Eigen::Index>(d[mode]);
    const auto cols = static_cast<Eigen::Index>(d.size() / d[mode]);
    Matrix<Scalar> out(rows, cols);
    for (std::size_t i = 0; i < d.n; ++i) {
        for (std::size_t j = 0; j < d.m; ++j) {
            for (std::size_t k = 0; k < d.l; ++k) {
                const std::size_t row = mode == 0 ? i : mode == 1 ? j : k;
                out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(detail::unfold_col(d, mode, i, j, k)))
                    = t(i, j, k);
            }
        }
    }
    return out;
}

/// Inverse of unfold.
template <class Derived>
Tensor3<typename Derived::Scalar> refold(const Eigen::MatrixBase<Derived>& mat, int mode, Dims3 dims)
{
    detail::check_mode(mode);
    if (static_cast<std::size_t>(mat.rows()) != dims[mode]
        || static_cast<std::size_t>(mat.cols()) * dims[mode] != dims.size()) {
        throw std::invalid_argument("refold: matrix shape does not match dims " + to_string(dims));
    }
    Tensor3<typename Derived::Scalar> t(dims);
    for (std::size_t i = 0; i < dims.n; ++i) {
        for (std::size_t j = 0; j < dims.m; ++j) {
            for (std::size_t k = 0; k < dims.l; ++k) {
                const std::size_t row = mode == 0 ? i : mode == 1 ? j : k;
                t(i, j, k) = mat(static_cast<Eigen::Index>(row),
                                 static_cast<Eigen::Index>(detail::unfold_col(dims, mode, i, j, k)));
            }
        }
    }
    return t;
}

/// Columnwise Kronecker product; row index a*q + b pairs row a of x with row b of y.
template <class DerivedX, class DerivedY>
Matrix<typename DerivedX::Scalar> khatri_rao(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y)
{
    if (x.cols() != y.cols()) {
        throw std::invalid_argument("khatri_rao: column count mismatch (" + std::to_string(x.cols()) + " vs "
                                    + std::to_string(y.cols()) + ")");
    }
    const Eigen::Index p = x.rows();
    const Eigen::Index q = y.rows();
    Matrix<typename DerivedX::Scalar> out(p * q, x.cols());
    for (Eigen::Index a = 0; a < p; ++a) {
        out.middleRows(a * q, q) = y.array().rowwise() * x.row(a).array();
    }
    return out;
}

}  // namespace cpdpm
