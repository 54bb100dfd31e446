// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include "cpdpm/evaluate.hpp"
#include "cpdpm/io.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace cpdpm;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

Tensor3d random_tensor(std::size_t n, std::size_t m, std::size_t l, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Tensor3d t(n, m, l);
    for (auto& v : t.data()) v = g(rng);
    return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string str(auto&&... parts)
{
    std::ostringstream os;
    os << std::setprecision(6);
    (os << ... << parts);
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Outcome oracle_equivalence()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t l = pick(rng, 1, 8), n = pick(rng, 1, 4), m = pick(rng, 1, 4);
        const FeatureMapd img = random_tensor(pick(rng, n, 12), pick(rng, m, 12), l, rng);
        const Tensor3d f = random_tensor(n, m, l, rng);
        const std::size_t rank = pick(rng, 1, std::min<std::size_t>(6, f.size()));
        const AlsResult<double> fit =
            cp_als(f, rank, AlsOptions{.max_iterations = 50, .restarts = 0, .seed = std::uint64_t(trial)});
        const Matrixd dense = correlate3_full(img, reconstruct(fit.model)).values;
        const Matrixd sep = correlate3_cp(img, fit.model).values;
        const double scale = std::max(1.0, dense.cwiseAbs().maxCoeff());
        worst = std::max(worst, (dense - sep).cwiseAbs().maxCoeff() / scale);
    }
    const double t = seconds_since(start);
    return {worst <= 1e-9 && t < 60, str("200 pairs, max relative error ", worst, ", ", t, " s")};
}

Outcome gain_formula()
{
    std::mt19937_64 rng(102);
    int exact = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Dims3 f{pick(rng, 1, 10), pick(rng, 1, 10), pick(rng, 1, 40)};
        const Dims3 img{f.n + pick(rng, 0, 12), f.m + pick(rng, 0, 12), f.l};
        const std::size_t r = pick(rng, 1, 12);
        exact += measured_gain(img, f, r) == theoretical_gain(f.n, f.m, f.l, r);
    }
    const double g = measured_gain({20, 20, 32}, {8, 8, 32}, 6);
    return {exact == 50 && g == 2048.0 / 288.0 && g > 7,
            str(exact, "/50 exact; 8x8x32 rank 6 gives ", std::setprecision(10), g)};
}

Outcome counter_reduction()
{
    const PartModel m = gen_model({.low_rank = 4, .noise = 0.1, .seed = 3});
    const SyntheticScene s = gen_scene(m, {.seed = 4});
    const auto rows = bench(m, s,
                            {{"rank6", root_part_ranks(m, 6, 6).ranks, false},
                             {"rank9", root_part_ranks(m, 9, 9).ranks, false}},
                            {.tau = 0, .repetitions = 5, .als = {.max_iterations = 50, .restarts = 0}});
    const BenchRow& r6 = rows[0];
    const BenchRow& r9 = rows[1];
    const double wall6 = r6.dense_median_seconds / r6.median_seconds;
    const double wall9 = r9.dense_median_seconds / r9.median_seconds;
    return {r6.counter_gain >= 4.5 && r9.counter_gain >= 4.5,
            str("counter gain rank 6 ", r6.counter_gain, ", rank 9 ", r9.counter_gain, "; wall-clock rank 6 ", wall6,
                "x, rank 9 ", wall9, "x (reported", wall6 >= 2 ? "" : ", below 2x", ")")};
}

Outcome zero_false_pruning()
{
    const PartModel m = gen_model({.low_rank = 4, .noise = 0.1, .seed = 5});
    DecomposedModel d = decompose_model(m, root_part_ranks(m, 6, 6), AlsOptions{.max_iterations = 50, .restarts = 0});
    std::vector<SyntheticScene> scenes;
    for (std::uint64_t i = 0; i < 15; ++i) scenes.push_back(gen_scene(m, {.objects = 4, .seed = 500 + i}));
    std::vector<PositiveExample> pos;
    for (const auto& s : scenes)
        for (const auto& p : positives_from(s)) pos.push_back(p);
    d = calibrate_thresholds(d, pos);

    std::size_t lost = 0, pruned = 0, examined = 0;
    for (const auto& s : scenes) {
        const DetectResult r = detect(d, s.pyramid, neg_inf);
        pruned += r.stats.positions_pruned();
        examined += r.stats.positions_examined;
        for (const auto& p : s.planted) lost += r.levels[p.hyp.level].total(p.hyp.root.y, p.hyp.root.x) == neg_inf;
    }
    return {lost == 0 && pos.size() >= 50,
            str(pos.size(), " positives in ", scenes.size(), " scenes, ", lost, " pruned; ", pruned, "/", examined,
                " positions pruned overall")};
}

Outcome als_sanity()
{
    std::mt19937_64 rng(106);
    std::normal_distribution<double> g;
    double worst_rank1 = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Vectord a(Eigen::Index(pick(rng, 1, 8))), b(Eigen::Index(pick(rng, 1, 8))), c(Eigen::Index(pick(rng, 1, 16)));
        for (Vectord* v : {&a, &b, &c})
            for (auto& x : *v) x = g(rng);
        const Tensor3d t = outer3(a, b, c);
        const AlsResult<double> fit = cp_als(t, 1, AlsOptions{.tolerance = 1e-12});
        worst_rank1 = std::max(worst_rank1, fit.residual / frobenius_norm(t));
    }
    int monotone = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor3d t = random_tensor(pick(rng, 2, 6), pick(rng, 2, 6), pick(rng, 2, 10), rng);
        AlsTrace<double> trace;
        cp_als(t, pick(rng, 1, 5), AlsOptions{.max_iterations = 40, .restarts = 1, .seed = std::uint64_t(trial)},
               static_cast<const CPModeld*>(nullptr), &trace);
        const double slack = 1e-9 * frobenius_norm(t);
        bool ok = true;
        for (const auto& run : trace)
            for (std::size_t i = 1; i < run.size(); ++i) ok = ok && run[i] <= run[i - 1] + slack;
        monotone += ok;
    }
    const Tensor3d t = random_tensor(6, 5, 12, rng);
    const AlsResult<double> x = cp_als(t, 4, AlsOptions{.seed = 9}), y = cp_als(t, 4, AlsOptions{.seed = 9});
    const bool same = x.model.weights == y.model.weights && x.model.a == y.model.a && x.model.b == y.model.b
                      && x.model.c == y.model.c && x.residual == y.residual;
    return {worst_rank1 <= 1e-8 && monotone == 100 && same,
            str("rank-1 worst relative residual ", worst_rank1, "; ", monotone, "/100 monotone runs; ",
                same ? "bit-identical" : "NOT bit-identical")};
}

double max_window_norm(const FeatureMapd& level, const Dims3& f)
{
    double best = 0;
    for (std::size_t y = 0; y + f.n <= level.n(); ++y)
        for (std::size_t x = 0; x + f.m <= level.m(); ++x) {
            double s = 0;
            for (std::size_t i = 0; i < f.n; ++i)
                for (std::size_t j = 0; j < f.m; ++j)
                    for (std::size_t k = 0; k < f.l; ++k) s += level(y + i, x + j, k) * level(y + i, x + j, k);
            best = std::max(best, std::sqrt(s));
        }
    return best;
}

Outcome score_bound()
{
    std::mt19937_64 rng(107);
    int held = 0;
    double tightest = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const PartModel m = gen_model({.root = {pick(rng, 2, 4), pick(rng, 2, 5)},
                                       .parts = pick(rng, 0, 4),
                                       .part = {pick(rng, 1, 3), pick(rng, 1, 3)},
                                       .channels = pick(rng, 2, 8),
                                       .search_radius = int(pick(rng, 1, 3)),
                                       .seed = std::uint64_t(trial)});
        const DecomposedModel d =
            decompose_model(m, root_part_ranks(m, pick(rng, 1, 4), pick(rng, 1, 3)), AlsOptions{.restarts = 1});
        const SyntheticScene s =
            gen_scene(m, {.objects = 2, .levels = {{16, 18}, {12, 14}}, .seed = 700 + std::uint64_t(trial)});
        const DetectResult a = detect_dense(m, s.pyramid, neg_inf);
        const DetectResult b = detect(d, s.pyramid, neg_inf, {.pruning = false});
        double bound = 0;
        for (std::size_t f = 0; f < d.filter_count(); ++f) {
            double w = 0;
            for (const auto& level : s.pyramid) w = std::max(w, max_window_norm(level, d.filter(f).cp.dims()));
            bound += d.filter(f).residual * w;
        }
        double gap = 0;
        for (std::size_t l = 0; l < a.levels.size(); ++l)
            gap = std::max(gap, (a.levels[l].total - b.levels[l].total).cwiseAbs().maxCoeff());
        held += gap <= bound + 1e-9;
        if (bound > 0) tightest = std::max(tightest, gap / bound);
    }
    return {held == 50, str(held, "/50 pairs within bound; largest gap/bound ", tightest)};
}

Outcome memory_gain()
{
    const PartModel m = gen_model({.seed = 8});
    const DecomposedModel d = decompose_model(m, root_part_ranks(m, 6, 6), AlsOptions{.max_iterations = 20, .restarts = 0});
    const fs::path dir = fs::temp_directory_path() / "cpdpm_acceptance";
    fs::remove_all(dir);
    save_model(dir / "dense.json", m);
    save_model(dir / "cp.json", d);

    std::size_t num = 0, den = 0, dense_file = 0, cp_file = 0, dense_elem = 0, cp_elem = 0;
    for (std::size_t i = 0; i < d.filter_count(); ++i) {
        const Dims3 f = d.filter(i).cp.dims();
        const std::size_t r = d.filter(i).rank();
        num += r * (f.n + f.m + f.l);
        den += f.size();
        const std::string stem = i == 0 ? "root" : "part" + std::to_string(i - 1);
        const std::size_t ds = fs::file_size(dir / ("dense." + stem + ".t3f"));
        const std::size_t cs = fs::file_size(dir / ("cp." + stem + ".cpf"));
        dense_file += ds;
        cp_file += cs;
        dense_elem += ds - t3f_header_bytes;
        cp_elem += cs - cpf_header_bytes - 8 * r;
    }
    const double formula = double(num) / double(den);
    const double elem = double(cp_elem) / double(dense_elem);
    const double whole = double(cp_file) / double(dense_file);
    return {std::abs(elem / formula - 1) <= 0.02,
            str("formula ", formula, ", factor blocks ", elem, ", whole files ", whole, " (",
                100 * (whole / formula - 1), "% above formula from headers and f64 weights)")};
}

Outcome roc_bound()
{
    // Filters with a geometrically decaying CP spectrum over a small full-rank floor.
    const PartModel m = gen_model({.low_rank = 16, .noise = 0.02, .decay = 0.5, .seed = 11});
    std::vector<SyntheticScene> scenes;
    for (std::uint64_t i = 0; i < 20; ++i) scenes.push_back(gen_scene(m, {.objects = 3, .seed = 1100 + i}));
    const AlsOptions als{.max_iterations = 500, .restarts = 2};

    // Grid spans the planted scores, where the misdetection rate moves from 0 to 1.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& sc : scenes)
        for (const auto& p : sc.planted) lo = std::min(lo, p.hyp.score), hi = std::max(hi, p.hyp.score);
    const auto taus = tau_grid(lo - 0.5, hi + 0.5, 20);
    const auto dense = roc_eval(Scorer{&m}, scenes, taus);

    struct Run
    {
        double gap = 0, counter_gain = 0, worst_residual = 0;
    };
    auto run = [&](std::size_t rank) {
        const DecomposedModel d = decompose_model(m, root_part_ranks(m, rank, rank), als);
        Run r;
        std::uint64_t cp = 0, full = 0;
        for (const auto& level : scenes[0].pyramid)
            for (std::size_t f = 0; f < d.filter_count(); ++f) {
                const Dims3 fd = d.filter(f).cp.dims();
                const ValidSupport v = valid_support(level.dims(), fd);
                cp += correlate3_cp(level, d.filter(f).cp).multiplications;
                full += v.height * v.width * fd.size();
            }
        for (std::size_t f = 0; f < d.filter_count(); ++f) {
            const Tensor3d& orig = f == 0 ? m.root : m.parts[f - 1].filter;
            r.worst_residual = std::max(r.worst_residual, d.filter(f).residual / frobenius_norm(orig));
        }
        r.counter_gain = double(full) / double(cp);
        r.gap = max_misdetection_gap(dense, roc_eval(Scorer{&d}, scenes, taus));
        return r;
    };
    const Run r2 = run(2), r6 = run(6);
    return {r6.counter_gain >= 4.5 && r6.gap <= 0.05 && r2.gap >= r6.gap,
            str("rank 6: ", r6.counter_gain, "x, max gap ", r6.gap, ", worst relative residual ", r6.worst_residual,
                "; rank 2: ", r2.counter_gain, "x, max gap ", r2.gap, ", worst relative residual ", r2.worst_residual,
                "; ", scenes.size(), " scenes, ", taus.size(), " thresholds")};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"gain formula exactness", gain_formula},
        {"4.5x counter reduction", counter_reduction},
        {"zero false pruning", zero_false_pruning},
        {"ALS sanity", als_sanity},
        {"score approximation bound", score_bound},
        {"memory gain", memory_gain},
        {"ROC degradation bound", roc_bound},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failures;
}
