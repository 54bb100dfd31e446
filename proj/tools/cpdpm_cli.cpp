// Command-line harness: synthetic data, decomposition, calibration, detection,
// ROC evaluation, benchmarking and model inspection.

#include "cpdpm/evaluate.hpp"
#include "cpdpm/features.hpp"
#include "cpdpm/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace cpdpm;
using nlohmann::json;

enum ExitCode
{
    exit_ok = 0,
    exit_usage = 1,
    exit_data = 2,
    exit_numeric = 3,
};

class UsageError : public std::runtime_error
{
    using std::runtime_error::runtime_error;
};

struct Globals
{
    std::uint64_t seed = 0;
    std::string out;
    std::string format = "csv";
};

Extent2 parse_extent(const std::string& s)
{
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw UsageError("expected ROWSxCOLS, got '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& s, std::size_t expect, const char* what)
{
    std::vector<double> v;
    try {
        for (const auto& t : split(s, ',')) v.push_back(std::stod(t));
    } catch (const std::exception&) {
        throw UsageError(std::string("bad number list for ") + what);
    }
    if (expect && v.size() != expect) throw UsageError(std::string(what) + ": expected " + std::to_string(expect) + " values");
    return v;
}

/// "full", "R", "S,T" or "R0,R1,...,Rn".
ExplicitRanks parse_ranks(const std::string& s, const PartModel& model)
{
    if (s == "full") return break_even_ranks(model);
    std::vector<std::size_t> v;
    try {
        for (const auto& t : split(s, ',')) v.push_back(std::stoul(t));
    } catch (const std::exception&) {
        throw UsageError("bad rank list '" + s + "'");
    }
    if (v.size() == 1) return root_part_ranks(model, v[0], v[0]);
    if (v.size() == 2 && model.parts.size() != 1) return root_part_ranks(model, v[0], v[1]);
    if (v.size() == model.parts.size() + 1) return {v};
    throw UsageError("rank list '" + s + "' does not match a model with " + std::to_string(model.parts.size()) + " parts");
}

void emit(const Globals& g, const std::string& text)
{
    if (g.out.empty() || g.out == "-") {
        std::cout << text;
        return;
    }
    const std::filesystem::path p(g.out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + g.out);
    out << text;
}

void require_out(const Globals& g, const char* cmd)
{
    if (g.out.empty()) throw UsageError(std::string(cmd) + " requires --out");
}

std::vector<SyntheticScene> load_scenes(const std::vector<std::string>& dirs)
{
    std::vector<SyntheticScene> scenes;
    for (const auto& d : dirs) scenes.push_back(load_scene(d));
    return scenes;
}

json roc_json(const std::vector<RocPoint>& pts)
{
    json arr = json::array();
    for (const auto& p : pts) {
        arr.push_back({{"tau", p.tau},
                       {"false_positives", p.false_positives},
                       {"missed", p.missed},
                       {"false_positive_rate", p.false_positive_rate},
                       {"false_positives_per_window", p.false_positives_per_window},
                       {"misdetection_rate", p.misdetection_rate}});
    }
    return arr;
}

json inspect_json(const AnyModel& any)
{
    json doc;
    doc["filters"] = json::array();
    auto dims_json = [](const Dims3& d) { return json::array({d.n, d.m, d.l}); };
    if (const auto* m = std::get_if<PartModel>(&any)) {
        doc["kind"] = "dense";
        doc["parts"] = m->parts.size();
        doc["channels"] = m->channels();
        doc["bias"] = m->bias;
        for (std::size_t i = 0; i <= m->parts.size(); ++i) {
            const Tensor3d& f = i == 0 ? m->root : m->parts[i - 1].filter;
            doc["filters"].push_back({{"name", i == 0 ? "root" : "part" + std::to_string(i - 1)},
                                      {"dims", dims_json(f.dims())},
                                      {"norm", frobenius_norm(f)},
                                      {"break_even_rank", break_even_rank(f.dims())}});
        }
        const PayloadSize ps = payload_size(*m);
        doc["payload_bytes"] = ps.total();
        doc["element_bytes"] = ps.element_bytes;
        doc["violations"] = json::array();
        for (const auto& v : validate(*m)) doc["violations"].push_back(v.field + ": " + v.rule);
        return doc;
    }
    const auto& m = std::get<DecomposedModel>(any);
    doc["kind"] = "decomposed";
    doc["parts"] = m.parts.size();
    doc["channels"] = m.channels();
    doc["bias"] = m.bias;
    doc["ranks"] = m.ranks();
    doc["calibrated"] = m.calibrated();
    std::size_t dense_elems = 0, cp_elems = 0;
    for (std::size_t i = 0; i < m.filter_count(); ++i) {
        const DecomposedFilter& f = m.filter(i);
        const Dims3 d = f.cp.dims();
        dense_elems += d.size();
        cp_elems += f.cp.factor_elements();
        const KruskalCheck k = kruskal_check(f.cp);
        json entry{{"name", i == 0 ? "root" : "part" + std::to_string(i - 1)},
                   {"dims", dims_json(d)},
                   {"rank", f.rank()},
                   {"residual", f.residual},
                   {"gain", theoretical_gain(d.n, d.m, d.l, f.rank())},
                   {"weights", std::vector<double>(f.cp.weights.data(), f.cp.weights.data() + f.cp.weights.size())},
                   {"kruskal",
                    {{"k_a", k.k_a.value},
                     {"k_b", k.k_b.value},
                     {"k_c", k.k_c.value},
                     {"bound", k.bound},
                     {"unique", k.holds},
                     {"exhaustive", k.exhaustive()}}}};
        if (f.thresholds) entry["thresholds"] = f.thresholds->values;
        doc["filters"].push_back(std::move(entry));
    }
    doc["model_gain"] = static_cast<double>(dense_elems) / static_cast<double>(cp_elems);
    const PayloadSize ps = payload_size(m);
    doc["payload_bytes"] = ps.total();
    doc["element_bytes"] = ps.element_bytes;
    doc["violations"] = json::array();
    for (const auto& v : validate(m)) doc["violations"].push_back(v.field + ": " + v.rule);
    return doc;
}

std::string inspect_text(const json& doc)
{
    std::ostringstream out;
    out << "kind: " << doc["kind"].get<std::string>() << "  parts: " << doc["parts"] << "  channels: "
        << doc["channels"] << "  bias: " << doc["bias"] << '\n';
    for (const auto& f : doc["filters"]) {
        const auto d = f["dims"];
        out << "  " << f["name"].get<std::string>() << "  " << d[0] << 'x' << d[1] << 'x' << d[2];
        if (f.contains("rank")) {
            const auto& k = f["kruskal"];
            out << "  rank " << f["rank"] << "  residual " << f["residual"].get<double>() << "  gain "
                << f["gain"].get<double>() << "  kruskal k=(" << k["k_a"] << ',' << k["k_b"] << ',' << k["k_c"]
                << ") bound " << k["bound"].get<double>() << (k["unique"].get<bool>() ? " unique" : " not-certified")
                << (k["exhaustive"].get<bool>() ? "" : " (k-ranks are lower bounds)");
            if (f.contains("thresholds")) out << "  calibrated";
        } else {
            out << "  norm " << f["norm"].get<double>() << "  break-even rank " << f["break_even_rank"];
        }
        out << '\n';
    }
    if (doc.contains("model_gain")) out << "model gain (dense/CP storage): " << doc["model_gain"].get<double>() << '\n';
    out << "payload bytes: " << doc["payload_bytes"] << " (elements " << doc["element_bytes"] << ")\n";
    for (const auto& v : doc["violations"]) out << "violation: " << v.get<std::string>() << '\n';
    return out.str();
}

int run(int argc, char** argv)
{
    CLI::App app{"CP-decomposed part-model detection harness"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--out", g.out, "Output path (file, directory or manifest, depending on the command)");
    app.add_option("--format", g.format, "Tabular output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();

    AlsOptions als;
    auto add_als = [&](CLI::App* cmd) {
        cmd->add_option("--iters", als.max_iterations, "ALS iteration limit")->capture_default_str();
        cmd->add_option("--tol", als.tolerance, "ALS residual tolerance relative to ||f||")->capture_default_str();
        cmd->add_option("--restarts", als.restarts, "Random ALS restarts")->capture_default_str();
    };

    // gen-model
    auto* gen_model_cmd = app.add_subcommand("gen-model", "Generate a synthetic part model");
    ModelGenSpec mspec;
    std::string root_size = "5x11", part_size = "8x8", deform = "0,0,0.02,0.02";
    std::size_t low_rank = 0;
    gen_model_cmd->add_option("--root", root_size, "Root filter ROWSxCOLS")->capture_default_str();
    gen_model_cmd->add_option("--parts", mspec.parts, "Number of parts")->capture_default_str();
    gen_model_cmd->add_option("--part-size", part_size, "Part filter ROWSxCOLS")->capture_default_str();
    gen_model_cmd->add_option("--channels", mspec.channels, "Feature channels")->capture_default_str();
    gen_model_cmd->add_option("--low-rank", low_rank, "Build filters as sums of K rank-1 terms (0 = full rank)");
    gen_model_cmd->add_option("--noise", mspec.noise, "Relative full-rank noise on low-rank filters")->capture_default_str();
    gen_model_cmd->add_option("--decay", mspec.decay, "Weight ratio between low-rank terms")->capture_default_str();
    gen_model_cmd->add_option("--radius", mspec.search_radius, "Part search radius")->capture_default_str();
    gen_model_cmd->add_option("--deformation", deform, "cdx,cdy,cdxx,cdyy")->capture_default_str();
    gen_model_cmd->add_option("--bias", mspec.bias, "Score bias")->capture_default_str();

    // gen-scene
    auto* gen_scene_cmd = app.add_subcommand("gen-scene", "Generate a synthetic scene for a dense model");
    SceneGenSpec sspec;
    std::string model_path, levels = "36x44,30x36,24x30";
    gen_scene_cmd->add_option("--model", model_path, "Dense model manifest")->required();
    gen_scene_cmd->add_option("--objects", sspec.objects, "Planted objects")->capture_default_str();
    gen_scene_cmd->add_option("--noise", sspec.noise, "Background standard deviation")->capture_default_str();
    gen_scene_cmd->add_option("--amplitude", sspec.amplitude, "Planted pattern amplitude")->capture_default_str();
    gen_scene_cmd->add_option("--levels", levels, "Pyramid level sizes")->capture_default_str();

    // extract
    auto* extract_cmd = app.add_subcommand("extract", "Gradient-histogram features from a PGM image");
    std::string image_path;
    int cell = 8, bins = 9;
    extract_cmd->add_option("--image", image_path, "Input PGM")->required();
    extract_cmd->add_option("--cell", cell, "Cell size in pixels")->capture_default_str();
    extract_cmd->add_option("--bins", bins, "Orientation bins")->capture_default_str();

    // decompose
    auto* decompose_cmd = app.add_subcommand("decompose", "CP-decompose every filter of a dense model");
    std::string ranks_arg, criterion = "gain2";
    double select_e = 0;
    std::size_t max_rank = 0;
    decompose_cmd->add_option("--model", model_path, "Dense model manifest")->required();
    auto* ranks_opt = decompose_cmd->add_option("--ranks", ranks_arg, "full | R | S,T | R0,...,Rn");
    auto* select_opt = decompose_cmd->add_option("--select-e", select_e, "Select ranks with threshold scale e");
    ranks_opt->excludes(select_opt);
    decompose_cmd->add_option("--criterion", criterion, "Rank criterion for --select-e")
        ->check(CLI::IsMember({"gain2", "relative"}))
        ->capture_default_str();
    decompose_cmd->add_option("--max-rank", max_rank, "Upper rank for selection (default break-even)");
    add_als(decompose_cmd);

    // calibrate
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Set pruning thresholds from planted positives");
    std::vector<std::string> scene_dirs;
    calibrate_cmd->add_option("--model", model_path, "Decomposed model manifest")->required();
    calibrate_cmd->add_option("--scenes", scene_dirs, "Scene directories")->required();

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "Run the detector on a scene");
    std::string scene_dir, pruning = "on", stats_path;
    double tau = 0;
    bool lenient = false;
    detect_cmd->add_option("--model", model_path, "Model manifest (dense or decomposed)")->required();
    detect_cmd->add_option("--scene", scene_dir, "Scene directory")->required();
    detect_cmd->add_option("--tau", tau, "Detection threshold")->capture_default_str();
    detect_cmd->add_option("--pruning", pruning, "on|off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    detect_cmd->add_flag("--lenient", lenient, "A fully pruned part contributes 0 instead of killing the hypothesis");
    detect_cmd->add_option("--stats", stats_path, "Write detection statistics (JSON)");

    // roc
    auto* roc_cmd = app.add_subcommand("roc", "Misdetection vs false positives over a tau grid");
    std::string taus_arg;
    int match_radius = 1;
    roc_cmd->add_option("--model", model_path, "Model manifest (dense or decomposed)")->required();
    roc_cmd->add_option("--scenes", scene_dirs, "Scene directories")->required();
    roc_cmd->add_option("--taus", taus_arg, "LO:HI:COUNT")->required();
    std::string roc_pruning = "off";
    roc_cmd->add_option("--pruning", roc_pruning, "on|off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    roc_cmd->add_option("--match-radius", match_radius, "Truth matching radius in cells")->capture_default_str();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Operation counts and wall time against the dense baseline");
    std::vector<std::string> configs{"2", "6", "9", "full"};
    std::string bench_pruning = "both";
    int reps = 5;
    bench_cmd->add_option("--model", model_path, "Dense model manifest")->required();
    bench_cmd->add_option("--scene", scene_dir, "Scene directory")->required();
    bench_cmd->add_option("--ranks", configs, "Rank configurations (full | R | S,T | R0,...,Rn)")->capture_default_str();
    bench_cmd->add_option("--pruning", bench_pruning, "on|off|both")
        ->check(CLI::IsMember({"on", "off", "both"}))
        ->capture_default_str();
    bench_cmd->add_option("--reps", reps, "Timed repetitions")->capture_default_str();
    bench_cmd->add_option("--tau", tau, "Detection threshold")->capture_default_str();
    add_als(bench_cmd);

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "Print model statistics");
    inspect_cmd->add_option("--model", model_path, "Model manifest")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_usage;
    }
    als.seed = g.seed;

    if (gen_model_cmd->parsed()) {
        require_out(g, "gen-model");
        mspec.root = parse_extent(root_size);
        mspec.part = parse_extent(part_size);
        if (low_rank > 0) mspec.low_rank = low_rank;
        const auto d = parse_doubles(deform, 4, "--deformation");
        mspec.deformation = {d[0], d[1], d[2], d[3]};
        mspec.seed = g.seed;
        save_model(g.out, gen_model(mspec));
        std::cerr << "wrote " << g.out << '\n';
    } else if (gen_scene_cmd->parsed()) {
        require_out(g, "gen-scene");
        sspec.levels.clear();
        for (const auto& e : split(levels, ',')) sspec.levels.push_back(parse_extent(e));
        sspec.seed = g.seed;
        const SyntheticScene scene = gen_scene(load_part_model(model_path), sspec);
        save_scene(g.out, scene);
        std::cerr << "wrote " << g.out << " (" << scene.planted.size() << " objects)\n";
    } else if (extract_cmd->parsed()) {
        require_out(g, "extract");
        const FeatureMapd f = extract_features(read_pgm(image_path), cell, bins);
        write_t3f(g.out, f);
        std::cerr << "wrote " << g.out << " (" << to_string(f.dims()) << ")\n";
    } else if (decompose_cmd->parsed()) {
        require_out(g, "decompose");
        const PartModel model = load_part_model(model_path);
        RankChoice choice;
        if (select_opt->count() > 0) {
            SelectedRanks sel;
            sel.e = select_e;
            sel.criterion = criterion == "relative" ? RankCriterion::RelativeResidual : RankCriterion::GainSquared;
            if (max_rank > 0) sel.max_rank = max_rank;
            choice = sel;
        } else {
            choice = parse_ranks(ranks_arg.empty() ? "full" : ranks_arg, model);
        }
        const DecomposedModel dec = decompose_model(model, choice, als);
        save_model(g.out, dec);
        for (std::size_t i = 0; i < dec.filter_count(); ++i) {
            const auto& f = dec.filter(i);
            const Dims3 d = f.cp.dims();
            std::cerr << (i == 0 ? std::string("root") : "part" + std::to_string(i - 1)) << " rank " << f.rank()
                      << " residual " << f.residual << " gain " << theoretical_gain(d.n, d.m, d.l, f.rank()) << '\n';
        }
    } else if (calibrate_cmd->parsed()) {
        require_out(g, "calibrate");
        const std::vector<SyntheticScene> scenes = load_scenes(scene_dirs);
        std::vector<PositiveExample> positives;
        for (const auto& s : scenes) {
            auto p = positives_from(s);
            positives.insert(positives.end(), p.begin(), p.end());
        }
        const DecomposedModel cal = calibrate_thresholds(load_decomposed_model(model_path), positives);
        save_model(g.out, cal);
        std::cerr << "calibrated on " << positives.size() << " positives\n";
    } else if (detect_cmd->parsed()) {
        const AnyModel any = load_model(model_path);
        const SyntheticScene scene = load_scene(scene_dir);
        DetectResult r;
        if (const auto* dense = std::get_if<PartModel>(&any)) {
            r = detect_dense(*dense, scene.pyramid, tau);
        } else {
            r = detect(std::get<DecomposedModel>(any), scene.pyramid, tau,
                       {.pruning = pruning == "on", .part_prune_kills = !lenient});
        }
        if (g.format == "json") {
            json arr = json::array();
            for (const auto& d : r.detections) {
                json parts = json::array();
                for (const auto& p : d.hyp.parts) parts.push_back({p.y, p.x});
                arr.push_back({{"level", d.hyp.level},
                               {"y", d.hyp.root.y},
                               {"x", d.hyp.root.x},
                               {"score", d.score},
                               {"model_id", d.model_id},
                               {"parts", parts}});
            }
            emit(g, arr.dump(2) + "\n");
        } else {
            emit(g, detections_csv(r.detections));
        }
        if (!stats_path.empty()) {
            std::ofstream out(stats_path, std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + stats_path);
            out << stats_json(r.stats) << '\n';
        }
        std::cerr << r.detections.size() << " detections, " << r.stats.positions_pruned() << "/"
                  << r.stats.positions_examined << " positions pruned, " << r.stats.multiplications
                  << " multiplications\n";
    } else if (roc_cmd->parsed()) {
        const auto t = split(taus_arg, ':');
        if (t.size() != 3) throw UsageError("--taus expects LO:HI:COUNT");
        std::vector<double> grid;
        try {
            grid = tau_grid(std::stod(t[0]), std::stod(t[1]), std::stoul(t[2]));
        } catch (const std::exception&) {
            throw UsageError("--taus expects LO:HI:COUNT");
        }
        const AnyModel any = load_model(model_path);
        const std::vector<SyntheticScene> scenes = load_scenes(scene_dirs);
        Scorer scorer = std::holds_alternative<PartModel>(any) ? Scorer{&std::get<PartModel>(any)}
                                                                : Scorer{&std::get<DecomposedModel>(any)};
        const auto pts = roc_eval(scorer, scenes, grid, {.pruning = roc_pruning == "on", .match_radius = match_radius});
        emit(g, g.format == "json" ? roc_json(pts).dump(2) + "\n" : roc_csv(pts));
    } else if (bench_cmd->parsed()) {
        const PartModel model = load_part_model(model_path);
        const SyntheticScene scene = load_scene(scene_dir);
        std::vector<BenchConfig> cfgs{{"dense", {}, false}};
        for (const auto& c : configs) {
            const ExplicitRanks r = parse_ranks(c, model);
            if (bench_pruning != "on") cfgs.push_back({"rank:" + c, r.ranks, false});
            if (bench_pruning != "off") cfgs.push_back({"rank:" + c + "+prune", r.ranks, true});
        }
        const auto rows = bench(model, scene, cfgs, {.tau = tau, .repetitions = reps, .als = als});
        if (g.format == "json") {
            json arr = json::array();
            for (const auto& r : rows) {
                arr.push_back({{"label", r.label},
                               {"ranks", r.ranks},
                               {"pruning", r.pruning},
                               {"multiplications", r.multiplications},
                               {"executed_multiplications", r.executed_multiplications},
                               {"dense_multiplications", r.dense_multiplications},
                               {"counter_gain", r.counter_gain},
                               {"theoretical_gains", r.theoretical_gains},
                               {"median_seconds", r.median_seconds},
                               {"dense_median_seconds", r.dense_median_seconds},
                               {"detections", r.detections},
                               {"detections_delta", r.detections_delta},
                               {"positions_pruned", r.positions_pruned}});
            }
            emit(g, arr.dump(2) + "\n");
        } else {
            emit(g, bench_csv(rows));
        }
        for (const auto& r : rows) {
            std::cerr << r.label << ": counter gain " << r.counter_gain << ", wall speedup "
                      << (r.median_seconds > 0 ? r.dense_median_seconds / r.median_seconds : 0) << ", detections "
                      << r.detections << " (delta " << r.detections_delta << ")\n";
        }
    } else if (inspect_cmd->parsed()) {
        const json doc = inspect_json(load_model(model_path));
        emit(g, g.format == "json" ? doc.dump(2) + "\n" : inspect_text(doc));
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const cpdpm::FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::out_of_range& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
}
