#include "cpdpm/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

namespace cpdpm {

namespace {

std::string fmt9(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Descending score, then (level, y, x).
bool ranks_before(const Detection& a, const Detection& b)
{
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.hyp.level, a.hyp.root) < std::tie(b.hyp.level, b.hyp.root);
}

double median(std::vector<double> v)
{
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

std::string join(const std::vector<std::size_t>& v, char sep)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s.push_back(sep);
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace

double box_iou(Pos a, Pos b, Extent2 box)
{
    const int h = static_cast<int>(box.rows);
    const int w = static_cast<int>(box.cols);
    const int iy = std::max(0, std::min(a.y, b.y) + h - std::max(a.y, b.y));
    const int ix = std::max(0, std::min(a.x, b.x) + w - std::max(a.x, b.x));
    const double inter = static_cast<double>(iy) * ix;
    return inter / (2.0 * h * w - inter);
}

std::vector<Detection> nms(std::vector<Detection> detections, Extent2 root_box, double overlap)
{
    std::sort(detections.begin(), detections.end(), ranks_before);
    std::vector<Detection> kept;
    for (auto& d : detections) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.hyp.level == d.hyp.level && box_iou(k.hyp.root, d.hyp.root, root_box) >= overlap) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(std::move(d));
    }
    return kept;
}

std::vector<double> tau_grid(double lo, double hi, std::size_t count)
{
    if (count == 0) return {};
    if (count == 1) return {lo};
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return g;
}

std::vector<RocPoint> roc_curve(const std::vector<SceneRun>& runs, Extent2 root_box, std::vector<double> taus,
                                int match_radius, double nms_overlap)
{
    std::sort(taus.begin(), taus.end());
    // NMS commutes with raising tau: a kept box's suppressors all score higher.
    std::vector<std::vector<Detection>> kept;
    std::uint64_t total_truth = 0, total_windows = 0;
    for (const auto& run : runs) {
        kept.push_back(nms(run.detections, root_box, nms_overlap));
        total_truth += run.truth.size();
        total_windows += run.windows;
    }
    std::vector<RocPoint> out;
    for (double tau : taus) {
        RocPoint pt;
        pt.tau = tau;
        for (std::size_t s = 0; s < runs.size(); ++s) {
            std::vector<bool> matched(runs[s].truth.size(), false);
            for (const auto& d : kept[s]) {
                if (!(d.score >= tau)) break;
                bool hit = false;
                for (std::size_t t = 0; t < matched.size(); ++t) {
                    const Hypothesis& truth = runs[s].truth[t].hyp;
                    if (matched[t] || truth.level != d.hyp.level) continue;
                    if (std::abs(truth.root.y - d.hyp.root.y) <= match_radius
                        && std::abs(truth.root.x - d.hyp.root.x) <= match_radius) {
                        matched[t] = true;
                        hit = true;
                        break;
                    }
                }
                if (!hit) ++pt.false_positives;
            }
            pt.missed += static_cast<std::uint64_t>(std::count(matched.begin(), matched.end(), false));
        }
        pt.false_positive_rate = runs.empty() ? 0 : static_cast<double>(pt.false_positives) / runs.size();
        pt.false_positives_per_window = total_windows ? static_cast<double>(pt.false_positives) / total_windows : 0;
        pt.misdetection_rate = total_truth ? static_cast<double>(pt.missed) / total_truth : 0;
        out.push_back(pt);
    }
    return out;
}

std::vector<RocPoint> roc_eval(const Scorer& scorer, const std::vector<SyntheticScene>& scenes,
                               const std::vector<double>& taus, const RocOptions& opts)
{
    constexpr double all = -std::numeric_limits<double>::infinity();
    std::vector<SceneRun> runs;
    Extent2 box;
    for (const auto& scene : scenes) {
        DetectResult r;
        if (const auto* dense = std::get_if<const PartModel*>(&scorer)) {
            r = detect_dense(**dense, scene.pyramid, all);
            box = {(*dense)->root.n(), (*dense)->root.m()};
        } else {
            const DecomposedModel* dec = std::get<const DecomposedModel*>(scorer);
            r = detect(*dec, scene.pyramid, all, {.pruning = opts.pruning});
            box = {dec->root.cp.dims().n, dec->root.cp.dims().m};
        }
        runs.push_back({std::move(r.detections), scene.planted, r.stats.positions_examined});
    }
    return roc_curve(runs, box, taus, opts.match_radius, opts.nms_overlap);
}

double max_misdetection_gap(const std::vector<RocPoint>& a, const std::vector<RocPoint>& b)
{
    if (a.size() != b.size()) throw std::invalid_argument("max_misdetection_gap: curves differ in length");
    double g = 0;
    for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i].misdetection_rate - b[i].misdetection_rate));
    return g;
}

double total_misdetection_gap(const std::vector<RocPoint>& a, const std::vector<RocPoint>& b)
{
    if (a.size() != b.size()) throw std::invalid_argument("total_misdetection_gap: curves differ in length");
    double g = 0;
    for (std::size_t i = 0; i < a.size(); ++i) g += std::abs(a[i].misdetection_rate - b[i].misdetection_rate);
    return g;
}

std::vector<BenchRow> bench(const PartModel& model, const SyntheticScene& scene, const std::vector<BenchConfig>& configs,
                            const BenchOptions& opts)
{
    if (opts.repetitions < 1) throw std::invalid_argument("bench: repetitions must be >= 1");
    auto timed = [&](auto&& run) {
        run();  // warm-up
        std::vector<double> t;
        for (int i = 0; i < opts.repetitions; ++i) {
            const auto start = std::chrono::steady_clock::now();
            run();
            t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
        return median(t);
    };
    using Key = std::tuple<std::size_t, int, int>;
    auto keys = [](const std::vector<Detection>& ds) {
        std::set<Key> s;
        for (const auto& d : ds) s.insert({d.hyp.level, d.hyp.root.y, d.hyp.root.x});
        return s;
    };

    const DetectResult dense = detect_dense(model, scene.pyramid, opts.tau);
    const double dense_time = timed([&] { return detect_dense(model, scene.pyramid, opts.tau); });
    const std::set<Key> dense_keys = keys(dense.detections);
    const std::vector<PositiveExample> positives = positives_from(scene);

    std::vector<BenchRow> rows;
    for (const auto& cfg : configs) {
        BenchRow row;
        row.label = cfg.label;
        row.ranks = cfg.ranks;
        row.pruning = cfg.pruning;
        row.dense_multiplications = dense.stats.multiplications;
        row.dense_median_seconds = dense_time;
        if (cfg.ranks.empty()) {
            row.multiplications = dense.stats.multiplications;
            row.executed_multiplications = dense.stats.executed_multiplications;
            row.median_seconds = dense_time;
            row.detections = dense.detections.size();
            row.theoretical_gains.assign(model.parts.size() + 1, 1.0);
        } else {
            DecomposedModel dec = decompose_model(model, ExplicitRanks{cfg.ranks}, opts.als);
            if (cfg.pruning) dec = calibrate_thresholds(std::move(dec), positives);
            const DetectOptions dopts{.pruning = cfg.pruning};
            const DetectResult r = detect(dec, scene.pyramid, opts.tau, dopts);
            row.multiplications = r.stats.multiplications;
            row.executed_multiplications = r.stats.executed_multiplications;
            row.positions_pruned = r.stats.positions_pruned();
            row.detections = r.detections.size();
            row.median_seconds = timed([&] { return detect(dec, scene.pyramid, opts.tau, dopts); });
            for (std::size_t i = 0; i < dec.filter_count(); ++i) {
                const Dims3 d = dec.filter(i).cp.dims();
                row.theoretical_gains.push_back(theoretical_gain(d.n, d.m, d.l, dec.filter(i).rank()));
            }
            const std::set<Key> k = keys(r.detections);
            std::vector<Key> diff;
            std::set_symmetric_difference(k.begin(), k.end(), dense_keys.begin(), dense_keys.end(),
                                          std::back_inserter(diff));
            row.detections_delta = diff.size();
        }
        row.counter_gain = static_cast<double>(row.dense_multiplications) / static_cast<double>(row.multiplications);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string roc_csv(const std::vector<RocPoint>& points)
{
    std::ostringstream out;
    out << "tau,false_positives,missed,false_positive_rate,false_positives_per_window,misdetection_rate\n";
    for (const auto& p : points) {
        out << fmt9(p.tau) << ',' << p.false_positives << ',' << p.missed << ',' << fmt9(p.false_positive_rate) << ','
            << fmt9(p.false_positives_per_window) << ',' << fmt9(p.misdetection_rate) << '\n';
    }
    return out.str();
}

std::string bench_csv(const std::vector<BenchRow>& rows)
{
    std::ostringstream out;
    out << "label,ranks,pruning,multiplications,executed_multiplications,dense_multiplications,counter_gain,"
           "min_theoretical_gain,median_seconds,dense_median_seconds,wall_speedup,detections,detections_delta,"
           "positions_pruned\n";
    for (const auto& r : rows) {
        const double min_gain = r.theoretical_gains.empty()
                                    ? 1.0
                                    : *std::min_element(r.theoretical_gains.begin(), r.theoretical_gains.end());
        const double speedup = r.median_seconds > 0 ? r.dense_median_seconds / r.median_seconds : 0;
        out << r.label << ',' << (r.ranks.empty() ? std::string("dense") : join(r.ranks, ' ')) << ','
            << (r.pruning ? "on" : "off") << ',' << r.multiplications << ',' << r.executed_multiplications << ','
            << r.dense_multiplications << ',' << fmt9(r.counter_gain) << ',' << fmt9(min_gain) << ','
            << fmt9(r.median_seconds) << ',' << fmt9(r.dense_median_seconds) << ',' << fmt9(speedup) << ','
            << r.detections << ',' << r.detections_delta << ',' << r.positions_pruned << '\n';
    }
    return out.str();
}

std::string detections_csv(const std::vector<Detection>& detections)
{
    std::ostringstream out;
    std::size_t parts = 0;
    for (const auto& d : detections) parts = std::max(parts, d.hyp.parts.size());
    out << "level,y,x,score,model_id";
    for (std::size_t i = 0; i < parts; ++i) out << ",part" << i << "_y,part" << i << "_x";
    out << '\n';
    for (const auto& d : detections) {
        out << d.hyp.level << ',' << d.hyp.root.y << ',' << d.hyp.root.x << ',' << fmt9(d.score) << ',' << d.model_id;
        for (const auto& p : d.hyp.parts) out << ',' << p.y << ',' << p.x;
        out << '\n';
    }
    return out.str();
}

std::string stats_json(const DetectStats& stats)
{
    nlohmann::json j;
    j["positions_examined"] = stats.positions_examined;
    j["positions_pruned"] = stats.positions_pruned();
    j["positions_surviving"] = stats.positions_surviving();
    j["pruned_at_rank"] = stats.pruned_at_rank;
    j["killed_by_parts"] = stats.killed_by_parts;
    j["part_candidates_pruned"] = stats.part_candidates_pruned;
    j["multiplications"] = stats.multiplications;
    j["executed_multiplications"] = stats.executed_multiplications;
    j["wall_seconds"] = stats.wall_seconds;
    return j.dump(2);
}

}  // namespace cpdpm
