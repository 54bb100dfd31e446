#include "cpdpm/detector.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <tuple>

namespace cpdpm {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;
// One image row as W x L.
using RowBlock = Eigen::Map<const Matrixd>;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Per-part data needed to place parts, independent of the filter representation.
struct PartGeometry
{
    Offset anchor;
    Deformation deformation;
    int radius = 1;
};

// Combines a root score map with part score maps; -inf entries are pruned.
LevelScores combine_level(const Matrixd& root_scores, std::span<const PartGeometry> parts,
                          std::span<const Matrixd* const> part_scores, double bias, bool part_prune_kills,
                          std::uint64_t& killed)
{
    const Eigen::Index H = root_scores.rows();
    const Eigen::Index W = root_scores.cols();
    LevelScores out;
    out.total = Matrixd::Constant(H, W, neg_inf);
    out.placements.assign(parts.size(), std::vector<Pos>(static_cast<std::size_t>(H * W)));
    for (Eigen::Index y = 0; y < H; ++y) {
        for (Eigen::Index x = 0; x < W; ++x) {
            double s = root_scores(y, x);
            if (s == neg_inf) continue;
            const Pos root{static_cast<int>(y), static_cast<int>(x)};
            bool alive = true;
            for (std::size_t i = 0; i < parts.size(); ++i) {
                const PartGeometry& g = parts[i];
                Placement pl = best_part_placement(g.anchor, g.deformation, g.radius, *part_scores[i], root);
                if (pl.score == neg_inf) {
                    if (part_prune_kills) {
                        alive = false;
                        break;
                    }
                    pl.pos = {root.y + g.anchor.dy, root.x + g.anchor.dx};
                    pl.score = 0;
                }
                out.placements[i][static_cast<std::size_t>(y * W + x)] = pl.pos;
                s += pl.score;
            }
            if (!alive) {
                ++killed;
                continue;
            }
            out.total(y, x) = s + bias;
        }
    }
    return out;
}

void emit(const LevelScores& ls, std::size_t level, double tau, int model_id, std::vector<Detection>& out)
{
    const Eigen::Index W = ls.total.cols();
    for (Eigen::Index y = 0; y < ls.total.rows(); ++y) {
        for (Eigen::Index x = 0; x < W; ++x) {
            const double s = ls.total(y, x);
            if (s == neg_inf || !(s >= tau)) continue;
            Detection d;
            d.hyp.level = level;
            d.hyp.root = {static_cast<int>(y), static_cast<int>(x)};
            for (const auto& pl : ls.placements) d.hyp.parts.push_back(pl[static_cast<std::size_t>(y * W + x)]);
            d.hyp.score = s;
            d.score = s;
            d.tau = tau;
            d.model_id = model_id;
            out.push_back(std::move(d));
        }
    }
}

template <class Parts, class DimsOf>
void check_expressible_impl(const Dims3& root, const Parts& parts, DimsOf dims_of, const Dims3& level)
{
    const ValidSupport rv = valid_support(level, root);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        const Dims3 pd = dims_of(p);
        if (pd.l != level.l || pd.n > level.n || pd.m > level.m) {
            throw std::invalid_argument("part " + std::to_string(i) + " filter " + to_string(pd)
                                        + " does not fit level " + to_string(level));
        }
        const ValidSupport pv = valid_support(level, pd);
        const auto ph = static_cast<Eigen::Index>(pv.height);
        const auto pw = static_cast<Eigen::Index>(pv.width);
        // Only the extreme root positions can produce an empty clipped window.
        for (int y : {0, static_cast<int>(rv.height) - 1}) {
            for (int x : {0, static_cast<int>(rv.width) - 1}) {
                if (part_window(p.anchor, p.search_radius, {y, x}, ph, pw).empty()) {
                    throw std::invalid_argument("part " + std::to_string(i) + " window is empty at root position ("
                                                + std::to_string(y) + "," + std::to_string(x) + ") on level "
                                                + to_string(level));
                }
            }
        }
    }
}

}  // namespace

std::uint64_t DetectStats::positions_pruned() const
{
    return std::accumulate(pruned_at_rank.begin(), pruned_at_rank.end(), std::uint64_t{0}) + killed_by_parts;
}

void DetectStats::merge(const DetectStats& other)
{
    positions_examined += other.positions_examined;
    if (pruned_at_rank.size() < other.pruned_at_rank.size()) pruned_at_rank.resize(other.pruned_at_rank.size(), 0);
    for (std::size_t r = 0; r < other.pruned_at_rank.size(); ++r) pruned_at_rank[r] += other.pruned_at_rank[r];
    killed_by_parts += other.killed_by_parts;
    part_candidates_pruned += other.part_candidates_pruned;
    multiplications += other.multiplications;
    executed_multiplications += other.executed_multiplications;
    wall_seconds += other.wall_seconds;
}

Window part_window(const Offset& anchor, int radius, Pos root, Eigen::Index height, Eigen::Index width)
{
    const int cy = root.y + anchor.dy;
    const int cx = root.x + anchor.dx;
    Window w;
    w.y0 = std::max(cy - radius, 0);
    w.y1 = std::min<int>(cy + radius, static_cast<int>(height) - 1);
    w.x0 = std::max(cx - radius, 0);
    w.x1 = std::min<int>(cx + radius, static_cast<int>(width) - 1);
    return w;
}

double score_hypothesis(const PartModel& model, const FeatureMapd& level, Pos root, std::span<const Pos> parts)
{
    if (parts.size() != model.parts.size()) {
        throw std::invalid_argument("score_hypothesis: expected " + std::to_string(model.parts.size())
                                    + " part positions");
    }
    auto response = [&](const Tensor3d& f, Pos p, const char* what) {
        const ValidSupport v = valid_support(level.dims(), f.dims());
        if (p.y < 0 || p.x < 0 || static_cast<std::size_t>(p.y) >= v.height || static_cast<std::size_t>(p.x) >= v.width) {
            throw std::out_of_range(std::string("score_hypothesis: ") + what + " position outside valid support");
        }
        const auto row = static_cast<Eigen::Index>(f.m() * f.l());
        double acc = 0;
        for (std::size_t i = 0; i < f.n(); ++i) {
            const double* a = f.raw() + i * f.m() * f.l();
            const double* b = level.raw() + level.index(p.y + i, static_cast<std::size_t>(p.x), 0);
            acc += Eigen::Map<const Vectord>(a, row).dot(Eigen::Map<const Vectord>(b, row));
        }
        return acc;
    };
    double s = response(model.root, root, "root");
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const PartSpec& ps = model.parts[i];
        const int dy = parts[i].y - (root.y + ps.anchor.dy);
        const int dx = parts[i].x - (root.x + ps.anchor.dx);
        s += response(ps.filter, parts[i], "part") - ps.deformation.penalty(dy, dx);
    }
    return s + model.bias;
}

Placement best_part_placement(const Offset& anchor, const Deformation& deformation, int radius,
                              const Matrixd& part_scores, Pos root)
{
    const Window w = part_window(anchor, radius, root, part_scores.rows(), part_scores.cols());
    if (w.empty()) throw std::out_of_range("best_part_placement: window is empty after clipping");
    const int cy = root.y + anchor.dy;
    const int cx = root.x + anchor.dx;
    Placement best{{cy, cx}, neg_inf};
    for (int y = w.y0; y <= w.y1; ++y) {
        for (int x = w.x0; x <= w.x1; ++x) {
            const double v = part_scores(y, x) - deformation.penalty(y - cy, x - cx);
            if (v > best.score) best = {{y, x}, v};
        }
    }
    return best;
}

Placement best_part_placement(const PartSpec& part, const ScoreMapd& part_scores, Pos root)
{
    return best_part_placement(part.anchor, part.deformation, part.search_radius, part_scores.values, root);
}

RankwiseResult evaluate_rankwise(const FeatureMapd& level, const CPModeld& model, const Mask& mask,
                                 const PruningThresholds* thresholds, std::vector<double>* trace)
{
    const Dims3 fd = model.dims();
    const ValidSupport v = valid_support(level.dims(), fd);
    const auto Hv = static_cast<Eigen::Index>(v.height);
    const auto Wv = static_cast<Eigen::Index>(v.width);
    if (mask.rows() != Hv || mask.cols() != Wv) throw std::invalid_argument("evaluate_rankwise: mask shape mismatch");
    if (thresholds && thresholds->values.size() != model.rank()) {
        throw std::invalid_argument("evaluate_rankwise: threshold count differs from rank");
    }
    const auto H = static_cast<Eigen::Index>(level.n());
    const auto W = static_cast<Eigen::Index>(level.m());
    const auto L = static_cast<Eigen::Index>(level.l());
    const auto n = static_cast<Eigen::Index>(fd.n);
    const auto m = static_cast<Eigen::Index>(fd.m);
    const std::uint64_t per_term = fd.n + fd.m + fd.l;

    RankwiseResult res;
    res.scores = Matrixd::Zero(Hv, Wv);
    res.pruned_after.setZero(Hv, Wv);
    Mask active = mask;
    res.active = static_cast<std::uint64_t>((mask.array() != 0).count());

    Matrixd plane(H, W);
    Matrixd rows_pass(Hv, W);
    Eigen::RowVectorXd col_pass(Wv);
    std::vector<std::uint8_t> need_row(static_cast<std::size_t>(H));
    std::vector<Eigen::Index> active_rows;

    for (std::size_t r = 0; r < model.rank(); ++r) {
        active_rows.clear();
        for (Eigen::Index y = 0; y < Hv; ++y) {
            if ((active.row(y).array() != 0).any()) active_rows.push_back(y);
        }
        if (active_rows.empty()) break;

        const auto rr = static_cast<Eigen::Index>(r);
        const Vectord c = model.c.col(rr);
        const Vectord a = model.a.col(rr);
        const Vectord wb = model.weights[rr] * model.b.col(rr);
        res.executed_multiplications += static_cast<std::uint64_t>(m);

        std::fill(need_row.begin(), need_row.end(), std::uint8_t{0});
        for (Eigen::Index y : active_rows) {
            for (Eigen::Index i = 0; i < n; ++i) need_row[static_cast<std::size_t>(y + i)] = 1;
        }
        for (Eigen::Index y = 0; y < H; ++y) {
            if (!need_row[static_cast<std::size_t>(y)]) continue;
            plane.row(y).transpose().noalias() = RowBlock(level.raw() + y * W * L, W, L) * c;
            res.executed_multiplications += static_cast<std::uint64_t>(W * L);
        }
        for (Eigen::Index y : active_rows) {
            rows_pass.row(y) = a[0] * plane.row(y);
            for (Eigen::Index i = 1; i < n; ++i) rows_pass.row(y) += a[i] * plane.row(y + i);
            col_pass = wb[0] * rows_pass.row(y).head(Wv);
            for (Eigen::Index j = 1; j < m; ++j) col_pass += wb[j] * rows_pass.row(y).segment(j, Wv);
            res.executed_multiplications += static_cast<std::uint64_t>(W * n + Wv * m);
            for (Eigen::Index x = 0; x < Wv; ++x) {
                if (!active(y, x)) continue;
                const double running = res.scores(y, x) + col_pass[x];
                res.scores(y, x) = running;
                res.multiplications += per_term;
                if (trace) trace->push_back(running);
                if (thresholds && running < thresholds->values[r]) {
                    active(y, x) = 0;
                    res.pruned_after(y, x) = static_cast<int>(r + 1);
                    ++res.pruned;
                }
            }
        }
    }
    for (Eigen::Index y = 0; y < Hv; ++y) {
        for (Eigen::Index x = 0; x < Wv; ++x) {
            if (!active(y, x)) res.scores(y, x) = neg_inf;
        }
    }
    return res;
}

std::vector<double> partial_scores(const FeatureMapd& level, const CPModeld& model, Pos pos)
{
    const ValidSupport v = valid_support(level.dims(), model.dims());
    if (pos.y < 0 || pos.x < 0 || static_cast<std::size_t>(pos.y) >= v.height
        || static_cast<std::size_t>(pos.x) >= v.width) {
        throw std::out_of_range("partial_scores: position outside valid support");
    }
    Mask mask = Mask::Zero(static_cast<Eigen::Index>(v.height), static_cast<Eigen::Index>(v.width));
    mask(pos.y, pos.x) = 1;
    std::vector<double> trace;
    evaluate_rankwise(level, model, mask, nullptr, &trace);
    return trace;
}

DecomposedModel calibrate_thresholds(DecomposedModel model, std::span<const PositiveExample> positives)
{
    if (positives.empty()) throw std::invalid_argument("calibrate_thresholds: no positive examples");
    for (const auto& p : positives) {
        if (!p.level) throw std::invalid_argument("calibrate_thresholds: positive without feature map");
        if (p.hyp.parts.size() != model.parts.size()) {
            throw std::invalid_argument("calibrate_thresholds: positive has " + std::to_string(p.hyp.parts.size())
                                        + " part positions, model has " + std::to_string(model.parts.size()));
        }
    }
    for (std::size_t i = 0; i < model.filter_count(); ++i) {
        DecomposedFilter& f = model.filter(i);
        std::vector<double> t(f.rank(), std::numeric_limits<double>::infinity());
        for (const auto& p : positives) {
            const Pos pos = i == 0 ? p.hyp.root : p.hyp.parts[i - 1];
            const std::vector<double> partial = partial_scores(*p.level, f.cp, pos);
            for (std::size_t r = 0; r < t.size(); ++r) t[r] = std::min(t[r], partial[r]);
        }
        f.thresholds = PruningThresholds{std::move(t)};
    }
    return model;
}

void check_expressible(const DecomposedModel& model, const Dims3& level)
{
    check_expressible_impl(model.root.cp.dims(), model.parts, [](const DecomposedPart& p) { return p.filter.cp.dims(); },
                           level);
}

void check_expressible(const PartModel& model, const Dims3& level)
{
    check_expressible_impl(model.root.dims(), model.parts, [](const PartSpec& p) { return p.filter.dims(); }, level);
}

DetectResult detect(const DecomposedModel& model, std::span<const FeatureMapd> pyramid, double tau,
                    const DetectOptions& opts)
{
    if (const auto v = validate(model); !v.empty()) {
        throw std::invalid_argument("detect: invalid model: " + v.front().field + " " + v.front().rule);
    }
    if (opts.pruning && !model.calibrated()) throw std::invalid_argument("detect: pruning requires calibrated thresholds");
    for (const auto& level : pyramid) check_expressible(model, level.dims());

    const auto start = Clock::now();
    DetectResult out;
    out.stats.pruned_at_rank.assign(model.root.rank(), 0);

    std::vector<PartGeometry> geometry;
    for (const auto& p : model.parts) geometry.push_back({p.anchor, p.deformation, p.search_radius});

    for (std::size_t li = 0; li < pyramid.size(); ++li) {
        const FeatureMapd& level = pyramid[li];
        const ValidSupport rv = valid_support(level.dims(), model.root.cp.dims());
        const auto Hr = static_cast<Eigen::Index>(rv.height);
        const auto Wr = static_cast<Eigen::Index>(rv.width);

        const RankwiseResult root = evaluate_rankwise(level, model.root.cp, Mask::Ones(Hr, Wr),
                                                      opts.pruning ? &*model.root.thresholds : nullptr);
        out.stats.positions_examined += root.active;
        out.stats.multiplications += root.multiplications;
        out.stats.executed_multiplications += root.executed_multiplications;
        for (Eigen::Index y = 0; y < Hr; ++y) {
            for (Eigen::Index x = 0; x < Wr; ++x) {
                if (const int r = root.pruned_after(y, x); r > 0) ++out.stats.pruned_at_rank[static_cast<std::size_t>(r - 1)];
            }
        }

        std::vector<RankwiseResult> part_results;
        part_results.reserve(model.parts.size());
        for (const auto& part : model.parts) {
            const ValidSupport pv = valid_support(level.dims(), part.filter.cp.dims());
            const auto Hp = static_cast<Eigen::Index>(pv.height);
            const auto Wp = static_cast<Eigen::Index>(pv.width);
            Mask mask;
            if (!opts.pruning) {
                mask = Mask::Ones(Hp, Wp);
            } else {
                // Union of the windows of surviving root positions, via a 2D difference array.
                Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> diff =
                    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(Hp + 1, Wp + 1);
                for (Eigen::Index y = 0; y < Hr; ++y) {
                    for (Eigen::Index x = 0; x < Wr; ++x) {
                        if (root.scores(y, x) == neg_inf) continue;
                        const Window w = part_window(part.anchor, part.search_radius,
                                                     {static_cast<int>(y), static_cast<int>(x)}, Hp, Wp);
                        ++diff(w.y0, w.x0);
                        --diff(w.y0, w.x1 + 1);
                        --diff(w.y1 + 1, w.x0);
                        ++diff(w.y1 + 1, w.x1 + 1);
                    }
                }
                mask.resize(Hp, Wp);
                for (Eigen::Index y = 0; y < Hp; ++y) {
                    for (Eigen::Index x = 0; x < Wp; ++x) {
                        if (y > 0) diff(y, x) += diff(y - 1, x);
                        if (x > 0) diff(y, x) += diff(y, x - 1);
                        if (y > 0 && x > 0) diff(y, x) -= diff(y - 1, x - 1);
                        mask(y, x) = diff(y, x) > 0 ? 1 : 0;
                    }
                }
            }
            part_results.push_back(evaluate_rankwise(level, part.filter.cp, mask,
                                                     opts.pruning ? &*part.filter.thresholds : nullptr));
            out.stats.multiplications += part_results.back().multiplications;
            out.stats.executed_multiplications += part_results.back().executed_multiplications;
            out.stats.part_candidates_pruned += part_results.back().pruned;
        }

        std::vector<const Matrixd*> part_scores;
        for (const auto& pr : part_results) part_scores.push_back(&pr.scores);
        LevelScores ls = combine_level(root.scores, geometry, part_scores, model.bias, opts.part_prune_kills,
                                       out.stats.killed_by_parts);
        emit(ls, li, tau, opts.model_id, out.detections);
        out.levels.push_back(std::move(ls));
    }
    out.stats.wall_seconds = seconds_since(start);
    return out;
}

DetectResult detect_dense(const PartModel& model, std::span<const FeatureMapd> pyramid, double tau, int model_id)
{
    if (const auto v = validate(model); !v.empty()) {
        throw std::invalid_argument("detect_dense: invalid model: " + v.front().field + " " + v.front().rule);
    }
    for (const auto& level : pyramid) check_expressible(model, level.dims());

    const auto start = Clock::now();
    DetectResult out;
    std::vector<PartGeometry> geometry;
    for (const auto& p : model.parts) geometry.push_back({p.anchor, p.deformation, p.search_radius});

    for (std::size_t li = 0; li < pyramid.size(); ++li) {
        const FeatureMapd& level = pyramid[li];
        const ScoreMapd root = correlate3_full(level, model.root);
        out.stats.positions_examined += static_cast<std::uint64_t>(root.values.size());
        out.stats.multiplications += root.multiplications;
        out.stats.executed_multiplications += root.executed_multiplications;
        std::vector<ScoreMapd> parts;
        std::vector<const Matrixd*> part_scores;
        parts.reserve(model.parts.size());
        for (const auto& p : model.parts) {
            parts.push_back(correlate3_full(level, p.filter));
            out.stats.multiplications += parts.back().multiplications;
            out.stats.executed_multiplications += parts.back().executed_multiplications;
        }
        for (const auto& p : parts) part_scores.push_back(&p.values);
        std::uint64_t killed = 0;
        LevelScores ls = combine_level(root.values, geometry, part_scores, model.bias, true, killed);
        emit(ls, li, tau, model_id, out.detections);
        out.levels.push_back(std::move(ls));
    }
    out.stats.wall_seconds = seconds_since(start);
    return out;
}

DetectResult detect_mixture(std::span<const DecomposedModel> models, std::span<const FeatureMapd> pyramid, double tau,
                            const DetectOptions& opts)
{
    DetectResult out;
    std::map<std::tuple<std::size_t, int, int>, Detection> best;
    for (std::size_t i = 0; i < models.size(); ++i) {
        DetectOptions o = opts;
        o.model_id = static_cast<int>(i);
        DetectResult r = detect(models[i], pyramid, tau, o);
        out.stats.merge(r.stats);
        for (auto& d : r.detections) {
            const auto key = std::make_tuple(d.hyp.level, d.hyp.root.y, d.hyp.root.x);
            auto it = best.find(key);
            if (it == best.end() || d.score > it->second.score) best[key] = std::move(d);
        }
    }
    for (auto& [key, d] : best) out.detections.push_back(std::move(d));
    return out;
}

}  // namespace cpdpm
