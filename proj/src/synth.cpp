#include "cpdpm/synth.hpp"

#include "cpdpm/io.hpp"

#include <json.hpp>

#include <fstream>
#include <random>

namespace cpdpm {

using nlohmann::json;

namespace {

Vectord gaussian_vector(std::size_t len, std::mt19937_64& rng)
{
    std::normal_distribution<double> g(0.0, 1.0);
    Vectord v(static_cast<Eigen::Index>(len));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
    return v;
}

// Entries in {-1, -3/4, ..., 3/4, 1} without the zero vector.
Vectord dyadic_vector(std::size_t len, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> q(-4, 4);
    Vectord v(static_cast<Eigen::Index>(len));
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = q(rng) / 4.0;
    } while (v.isZero());
    return v;
}

Tensor3d gen_filter(const Dims3& d, const ModelGenSpec& spec, std::mt19937_64& rng)
{
    if (!spec.low_rank) {
        Tensor3d t(d, gaussian_vector(d.size(), rng));
        t.data() /= t.data().norm();
        return round_to_float(std::move(t));
    }
    const std::size_t k = *spec.low_rank;
    if (k == 0) throw std::invalid_argument("gen_model: low_rank must be >= 1");
    if (spec.noise == 0) {
        // Weights 1, 1/2, 1/4, ... keep every sum exactly representable.
        Tensor3d t(d);
        double w = 1.0;
        for (std::size_t r = 0; r < k; ++r, w *= 0.5) {
            t.data() += w * outer3(dyadic_vector(d.n, rng), dyadic_vector(d.m, rng), dyadic_vector(d.l, rng)).data();
        }
        return t;
    }
    Tensor3d t(d);
    double w = 1.0;
    for (std::size_t r = 0; r < k; ++r, w *= spec.decay) {
        Vectord a = gaussian_vector(d.n, rng), b = gaussian_vector(d.m, rng), c = gaussian_vector(d.l, rng);
        t.data() += w * outer3(a / a.norm(), b / b.norm(), c / c.norm()).data();
    }
    t.data() /= t.data().norm();
    Vectord g = gaussian_vector(d.size(), rng);
    t.data() += spec.noise * g / g.norm();
    t.data() /= t.data().norm();
    return round_to_float(std::move(t));
}

}  // namespace

PartModel gen_model(const ModelGenSpec& spec)
{
    if (spec.root.rows == 0 || spec.root.cols == 0 || spec.part.rows == 0 || spec.part.cols == 0 || spec.channels == 0) {
        throw std::invalid_argument("gen_model: filter sizes must be positive");
    }
    if (spec.search_radius < 1) throw std::invalid_argument("gen_model: search_radius must be >= 1");
    if (spec.noise < 0) throw std::invalid_argument("gen_model: noise must be >= 0");
    const int r = spec.search_radius;
    // Anchor ranges that keep every part window non-empty for every root position.
    const int dy_lo = -r;
    const int dy_hi = r - (static_cast<int>(spec.part.rows) - static_cast<int>(spec.root.rows));
    const int dx_lo = -r;
    const int dx_hi = r - (static_cast<int>(spec.part.cols) - static_cast<int>(spec.root.cols));
    if (spec.parts > 0 && (dy_hi < dy_lo || dx_hi < dx_lo)) {
        throw std::invalid_argument("gen_model: part filters too large for the search radius");
    }

    std::mt19937_64 rng(spec.seed);
    PartModel m;
    m.bias = spec.bias;
    m.root = gen_filter({spec.root.rows, spec.root.cols, spec.channels}, spec, rng);
    std::uniform_int_distribution<int> ady(dy_lo, std::max(dy_lo, dy_hi));
    std::uniform_int_distribution<int> adx(dx_lo, std::max(dx_lo, dx_hi));
    for (std::size_t i = 0; i < spec.parts; ++i) {
        PartSpec p;
        p.filter = gen_filter({spec.part.rows, spec.part.cols, spec.channels}, spec, rng);
        p.anchor = {ady(rng), adx(rng)};
        p.deformation = spec.deformation;
        p.search_radius = r;
        m.parts.push_back(std::move(p));
    }
    return m;
}

SyntheticScene gen_scene(const PartModel& model, const SceneGenSpec& spec)
{
    if (spec.levels.empty()) throw std::invalid_argument("gen_scene: at least one level required");
    if (spec.noise < 0) throw std::invalid_argument("gen_scene: noise must be >= 0");
    const std::size_t L = model.channels();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> g(0.0, 1.0);

    SyntheticScene scene;
    scene.noise_level = spec.noise;
    scene.seed = spec.seed;
    for (const Extent2& e : spec.levels) {
        FeatureMapd level(Dims3{e.rows, e.cols, L});
        check_expressible(model, level.dims());
        if (spec.noise > 0) {
            for (Eigen::Index i = 0; i < level.data().size(); ++i) level.data()[i] = spec.noise * g(rng);
        }
        scene.pyramid.push_back(std::move(level));
    }

    struct Footprint
    {
        std::size_t level;
        int y0, x0, y1, x1;
    };
    std::vector<Footprint> used;
    auto add_pattern = [&](FeatureMapd& level, const Tensor3d& f, Pos p) {
        const double scale = spec.amplitude / frobenius_norm(f);
        for (std::size_t i = 0; i < f.n(); ++i) {
            for (std::size_t j = 0; j < f.m(); ++j) {
                for (std::size_t k = 0; k < f.l(); ++k) level(p.y + i, p.x + j, k) += scale * f(i, j, k);
            }
        }
    };

    std::uniform_int_distribution<std::size_t> pick_level(0, scene.pyramid.size() - 1);
    for (std::size_t obj = 0; obj < spec.objects; ++obj) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const std::size_t li = pick_level(rng);
            const Dims3 ld = scene.pyramid[li].dims();
            const ValidSupport rv = valid_support(ld, model.root.dims());
            std::uniform_int_distribution<int> py(0, static_cast<int>(rv.height) - 1);
            std::uniform_int_distribution<int> px(0, static_cast<int>(rv.width) - 1);
            Hypothesis h;
            h.level = li;
            h.root = {py(rng), px(rng)};
            Footprint fp{li, h.root.y, h.root.x, h.root.y + static_cast<int>(model.root.n()) - 1,
                         h.root.x + static_cast<int>(model.root.m()) - 1};
            bool ok = true;
            for (const PartSpec& p : model.parts) {
                const ValidSupport pv = valid_support(ld, p.filter.dims());
                const Window w = part_window(p.anchor, p.search_radius, h.root, static_cast<Eigen::Index>(pv.height),
                                             static_cast<Eigen::Index>(pv.width));
                std::uniform_int_distribution<int> wy(w.y0, w.y1);
                std::uniform_int_distribution<int> wx(w.x0, w.x1);
                const Pos pp{wy(rng), wx(rng)};
                h.parts.push_back(pp);
                fp.y0 = std::min(fp.y0, w.y0);
                fp.x0 = std::min(fp.x0, w.x0);
                fp.y1 = std::max(fp.y1, w.y1 + static_cast<int>(p.filter.n()) - 1);
                fp.x1 = std::max(fp.x1, w.x1 + static_cast<int>(p.filter.m()) - 1);
            }
            for (const Footprint& u : used) {
                if (u.level == fp.level && fp.y0 <= u.y1 && u.y0 <= fp.y1 && fp.x0 <= u.x1 && u.x0 <= fp.x1) ok = false;
            }
            if (!ok) continue;
            FeatureMapd& level = scene.pyramid[li];
            add_pattern(level, model.root, h.root);
            for (std::size_t i = 0; i < model.parts.size(); ++i) add_pattern(level, model.parts[i].filter, h.parts[i]);
            used.push_back(fp);
            scene.planted.push_back({std::move(h)});
            placed = true;
        }
        if (!placed) throw std::invalid_argument("gen_scene: no room for object " + std::to_string(obj));
    }
    for (auto& level : scene.pyramid) level = round_to_float(std::move(level));
    for (auto& p : scene.planted) p.hyp.score = score_hypothesis(model, scene.pyramid[p.hyp.level], p.hyp.root, p.hyp.parts);
    return scene;
}

std::vector<PositiveExample> positives_from(const SyntheticScene& scene)
{
    std::vector<PositiveExample> out;
    for (const auto& p : scene.planted) out.push_back({&scene.pyramid[p.hyp.level], p.hyp});
    return out;
}

void save_scene(const std::filesystem::path& dir, const SyntheticScene& scene)
{
    std::filesystem::create_directories(dir);
    json doc;
    doc["version"] = 1;
    doc["seed"] = scene.seed;
    doc["noise"] = scene.noise_level;
    doc["levels"] = json::array();
    for (std::size_t i = 0; i < scene.pyramid.size(); ++i) {
        const std::string name = "level" + std::to_string(i) + ".t3f";
        write_t3f(dir / name, scene.pyramid[i]);
        doc["levels"].push_back(name);
    }
    doc["planted"] = json::array();
    for (const auto& p : scene.planted) {
        json parts = json::array();
        for (const Pos& q : p.hyp.parts) parts.push_back({q.y, q.x});
        doc["planted"].push_back(
            {{"level", p.hyp.level}, {"root", {p.hyp.root.y, p.hyp.root.x}}, {"parts", parts}, {"score", p.hyp.score}});
    }
    std::ofstream out(dir / "scene.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "scene.json").string());
    out << doc.dump(2) << '\n';
}

SyntheticScene load_scene(const std::filesystem::path& dir)
{
    const Bytes bytes = read_file(dir / "scene.json");
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw FormatError((dir / "scene.json").string() + ": " + e.what(), e.byte);
    }
    SyntheticScene s;
    try {
        s.seed = doc.value("seed", std::uint64_t{0});
        s.noise_level = doc.value("noise", 0.0);
        for (const auto& name : doc.at("levels")) s.pyramid.push_back(read_t3f(dir / name.get<std::string>()));
        for (const auto& p : doc.value("planted", json::array())) {
            PlantedObject o;
            o.hyp.level = p.at("level").get<std::size_t>();
            const auto root = p.at("root").get<std::vector<int>>();
            if (root.size() != 2) throw FormatError("scene.json: root must be [y, x]", 0);
            o.hyp.root = {root[0], root[1]};
            for (const auto& q : p.at("parts")) {
                const auto v = q.get<std::vector<int>>();
                if (v.size() != 2) throw FormatError("scene.json: part must be [y, x]", 0);
                o.hyp.parts.push_back({v[0], v[1]});
            }
            o.hyp.score = p.value("score", 0.0);
            if (o.hyp.level >= s.pyramid.size()) throw FormatError("scene.json: planted level out of range", 0);
            s.planted.push_back(std::move(o));
        }
    } catch (const json::exception& e) {
        throw FormatError((dir / "scene.json").string() + ": " + e.what(), 0);
    }
    return s;
}

}  // namespace cpdpm
