#pragma once

// Reference implementations written with plain loops over std::vector, sharing
// no code with the library paths they check.

#include "cpdpm/detector.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

struct Cube
{
    std::size_t n, m, l;
    std::vector<double> v;

    Cube(std::size_t n_, std::size_t m_, std::size_t l_) : n(n_), m(m_), l(l_), v(n_ * m_ * l_, 0.0) {}
    double& at(std::size_t i, std::size_t j, std::size_t k) { return v[(i * m + j) * l + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return v[(i * m + j) * l + k]; }
};

inline Cube from(const cpdpm::Tensor3d& t)
{
    Cube c(t.n(), t.m(), t.l());
    for (std::size_t i = 0; i < t.n(); ++i)
        for (std::size_t j = 0; j < t.m(); ++j)
            for (std::size_t k = 0; k < t.l(); ++k) c.at(i, j, k) = t(i, j, k);
    return c;
}

inline double norm(const Cube& c)
{
    double s = 0;
    for (double x : c.v) s += x * x;
    return std::sqrt(s);
}

/// Valid correlation, four nested loops per output cell.
inline std::vector<std::vector<double>> correlate(const Cube& img, const Cube& f)
{
    const std::size_t H = img.n - f.n + 1, W = img.m - f.m + 1;
    std::vector<std::vector<double>> out(H, std::vector<double>(W, 0.0));
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            double s = 0;
            for (std::size_t i = 0; i < f.n; ++i)
                for (std::size_t j = 0; j < f.m; ++j)
                    for (std::size_t k = 0; k < f.l; ++k) s += f.at(i, j, k) * img.at(y + i, x + j, k);
            out[y][x] = s;
        }
    return out;
}

inline double correlate_at(const Cube& img, const Cube& f, std::size_t y, std::size_t x)
{
    double s = 0;
    for (std::size_t i = 0; i < f.n; ++i)
        for (std::size_t j = 0; j < f.m; ++j)
            for (std::size_t k = 0; k < f.l; ++k) s += f.at(i, j, k) * img.at(y + i, x + j, k);
    return s;
}

/// Sum of w[r] a_r(i) b_r(j) c_r(k), term by term.
inline Cube cp_sum(const cpdpm::CPModeld& m, std::size_t terms)
{
    Cube c(static_cast<std::size_t>(m.a.rows()), static_cast<std::size_t>(m.b.rows()),
           static_cast<std::size_t>(m.c.rows()));
    for (std::size_t r = 0; r < terms; ++r)
        for (std::size_t i = 0; i < c.n; ++i)
            for (std::size_t j = 0; j < c.m; ++j)
                for (std::size_t k = 0; k < c.l; ++k) {
                    const auto R = static_cast<Eigen::Index>(r);
                    c.at(i, j, k) += m.weights[R] * m.a(static_cast<Eigen::Index>(i), R)
                                     * m.b(static_cast<Eigen::Index>(j), R) * m.c(static_cast<Eigen::Index>(k), R);
                }
    return c;
}

/// Quadratic displacement cost written out from its definition.
inline double penalty(const cpdpm::Deformation& d, int dy, int dx)
{
    return d.cdx * dx + d.cdy * dy + d.cdxx * dx * dx + d.cdyy * dy * dy;
}

/// root . phi(p0) + sum_i (f_i . phi(p_i) - d_i . psi) + bias, using loops only.
inline double hypothesis_score(const cpdpm::PartModel& model, const cpdpm::FeatureMapd& level, cpdpm::Pos root,
                               const std::vector<cpdpm::Pos>& parts)
{
    const Cube img = from(level);
    double s = correlate_at(img, from(model.root), static_cast<std::size_t>(root.y), static_cast<std::size_t>(root.x));
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = model.parts[i];
        s += correlate_at(img, from(p.filter), static_cast<std::size_t>(parts[i].y),
                          static_cast<std::size_t>(parts[i].x));
        s -= penalty(p.deformation, parts[i].y - (root.y + p.anchor.dy), parts[i].x - (root.x + p.anchor.dx));
    }
    return s + model.bias;
}

struct Best
{
    int y = 0, x = 0;
    double score = -std::numeric_limits<double>::infinity();
};

/// Every cell of the clipped window, row-major; first strict maximum wins.
inline Best scan_window(const std::vector<std::vector<double>>& map, cpdpm::Offset anchor, const cpdpm::Deformation& d,
                        int radius, cpdpm::Pos root)
{
    Best b;
    const int H = static_cast<int>(map.size()), W = static_cast<int>(map[0].size());
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const int y = root.y + anchor.dy + dy, x = root.x + anchor.dx + dx;
            if (y < 0 || x < 0 || y >= H || x >= W) continue;
            const double v = map[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] - penalty(d, dy, dx);
            if (v > b.score) b = {y, x, v};
        }
    return b;
}

inline cpdpm::Tensor3d random_tensor(std::size_t n, std::size_t m, std::size_t l, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    cpdpm::Tensor3d t(n, m, l);
    for (Eigen::Index i = 0; i < t.data().size(); ++i) t.data()[i] = g(rng);
    return t;
}

inline cpdpm::Vectord random_vector(Eigen::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    cpdpm::Vectord v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

}  // namespace oracle
