#include "cpdpm/dpm_model.hpp"

#include "cpdpm/io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace cpdpm {

using nlohmann::json;

namespace {

std::string filter_name(std::size_t i)
{
    return i == 0 ? std::string("root") : "parts[" + std::to_string(i - 1) + "]";
}

void check_part_fields(std::vector<Violation>& out, const std::string& name, const Deformation& d, int radius)
{
    if (!std::isfinite(d.cdx) || !std::isfinite(d.cdy) || !std::isfinite(d.cdxx) || !std::isfinite(d.cdyy)) {
        out.push_back({name + ".deformation", "coefficients must be finite"});
    }
    if (d.cdxx < 0) out.push_back({name + ".deformation.cdxx", "must be >= 0"});
    if (d.cdyy < 0) out.push_back({name + ".deformation.cdyy", "must be >= 0"});
    if (radius < 1) out.push_back({name + ".search_radius", "must be >= 1"});
}

}  // namespace

std::vector<std::size_t> DecomposedModel::ranks() const
{
    std::vector<std::size_t> r{root.rank()};
    for (const auto& p : parts) r.push_back(p.filter.rank());
    return r;
}

bool DecomposedModel::calibrated() const
{
    for (std::size_t i = 0; i < filter_count(); ++i) {
        if (!filter(i).thresholds) return false;
    }
    return true;
}

std::vector<Violation> validate(const PartModel& model)
{
    std::vector<Violation> out;
    if (model.root.size() == 0) {
        out.push_back({"root", "filter is empty"});
        return out;
    }
    if (!std::isfinite(model.bias)) out.push_back({"bias", "must be finite"});
    for (std::size_t i = 0; i < model.parts.size(); ++i) {
        const PartSpec& p = model.parts[i];
        const std::string name = filter_name(i + 1);
        if (p.filter.size() == 0) {
            out.push_back({name + ".filter", "filter is empty"});
        } else if (p.filter.l() != model.root.l()) {
            out.push_back({name + ".filter", "channel extent " + std::to_string(p.filter.l())
                                                 + " differs from root channel extent "
                                                 + std::to_string(model.root.l())});
        }
        check_part_fields(out, name, p.deformation, p.search_radius);
    }
    return out;
}

std::vector<Violation> validate(const DecomposedModel& model)
{
    std::vector<Violation> out;
    if (!std::isfinite(model.bias)) out.push_back({"bias", "must be finite"});
    for (std::size_t i = 0; i < model.filter_count(); ++i) {
        const DecomposedFilter& f = model.filter(i);
        const std::string name = filter_name(i);
        if (const std::string err = f.cp.check(1e-6); !err.empty()) {
            out.push_back({name + ".cp", err});
            continue;
        }
        if (f.cp.dims().l != model.channels()) {
            out.push_back({name + ".cp", "channel extent differs from root"});
        }
        if (f.thresholds && f.thresholds->values.size() != f.rank()) {
            out.push_back({name + ".thresholds", "length " + std::to_string(f.thresholds->values.size())
                                                     + " differs from rank " + std::to_string(f.rank())});
        }
        if (i > 0) check_part_fields(out, name, model.parts[i - 1].deformation, model.parts[i - 1].search_radius);
    }
    return out;
}

PartModel reconstruct_model(const DecomposedModel& model)
{
    PartModel out;
    out.root = reconstruct(model.root.cp);
    out.bias = model.bias;
    for (const auto& p : model.parts) {
        out.parts.push_back({reconstruct(p.filter.cp), p.anchor, p.deformation, p.search_radius});
    }
    return out;
}

ExplicitRanks root_part_ranks(const PartModel& model, std::size_t root_rank, std::size_t part_rank)
{
    ExplicitRanks r{{root_rank}};
    r.ranks.resize(model.parts.size() + 1, part_rank);
    return r;
}

ExplicitRanks break_even_ranks(const PartModel& model)
{
    ExplicitRanks r{{break_even_rank(model.root.dims())}};
    for (const auto& p : model.parts) r.ranks.push_back(break_even_rank(p.filter.dims()));
    return r;
}

DecomposedModel decompose_model(const PartModel& model, const RankChoice& ranks, const AlsOptions& opts)
{
    if (const auto v = validate(model); !v.empty()) {
        throw std::invalid_argument("decompose_model: invalid model: " + v.front().field + " " + v.front().rule);
    }
    const std::size_t count = model.parts.size() + 1;
    if (const auto* ex = std::get_if<ExplicitRanks>(&ranks); ex && ex->ranks.size() != count) {
        throw std::invalid_argument("decompose_model: expected " + std::to_string(count) + " ranks, got "
                                    + std::to_string(ex->ranks.size()));
    }

    // Factors as they will be written, so thresholds calibrated in memory stay valid after a save.
    auto stored = [](const Tensor3d& f, CPModeld cp) -> DecomposedFilter {
        cp = round_to_float(std::move(cp));
        const double residual = frobenius_norm(tensor_sub(f, reconstruct(cp)));
        return {std::move(cp), residual, std::nullopt};
    };

    auto decompose_one = [&](std::size_t i, const Tensor3d& f) -> DecomposedFilter {
        try {
            if (const auto* ex = std::get_if<ExplicitRanks>(&ranks)) {
                AlsResult<double> fit = cp_als(f, ex->ranks[i], opts);
                return stored(f, std::move(fit.model));
            }
            const auto& sel = std::get<SelectedRanks>(ranks);
            double e = sel.e;
            if (sel.criterion == RankCriterion::GainSquared && sel.scale_by_filter_norm) {
                e *= frobenius_norm(f);
                if (!(e > 0)) e = sel.e;
            }
            RankSelection<double> chosen = select_rank(f, e, opts, sel.criterion, sel.max_rank);
            return stored(f, std::move(chosen.fit.model));
        } catch (const std::invalid_argument& ex) {
            throw std::invalid_argument("decompose_model: " + filter_name(i) + ": " + ex.what());
        } catch (const std::exception& ex) {
            throw std::runtime_error("decompose_model: " + filter_name(i) + ": " + ex.what());
        }
    };

    DecomposedModel out;
    out.bias = model.bias;
    out.root = decompose_one(0, model.root);
    for (std::size_t i = 0; i < model.parts.size(); ++i) {
        const PartSpec& p = model.parts[i];
        out.parts.push_back({decompose_one(i + 1, p.filter), p.anchor, p.deformation, p.search_radius});
    }
    return out;
}

PayloadSize payload_size(const PartModel& model)
{
    PayloadSize s;
    auto add = [&](const Tensor3d& t) {
        const std::size_t total = encode_t3f(t).size();
        s.element_bytes += 4 * t.size();
        s.overhead_bytes += total - 4 * t.size();
    };
    add(model.root);
    for (const auto& p : model.parts) add(p.filter);
    return s;
}

PayloadSize payload_size(const DecomposedModel& model)
{
    PayloadSize s;
    for (std::size_t i = 0; i < model.filter_count(); ++i) {
        const CPModeld& cp = model.filter(i).cp;
        const std::size_t total = encode_cpf(cp).size();
        s.element_bytes += 4 * cp.factor_elements();
        s.overhead_bytes += total - 4 * cp.factor_elements();
    }
    return s;
}

// ---------------------------------------------------------------------------
// manifests

namespace {

constexpr int manifest_version = 1;

json offset_json(const Offset& o) { return json::array({o.dy, o.dx}); }
json deformation_json(const Deformation& d) { return json::array({d.cdx, d.cdy, d.cdxx, d.cdyy}); }

void write_manifest(const std::filesystem::path& path, const json& doc)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

std::string payload_name(const std::filesystem::path& manifest, const std::string& filter, const char* ext)
{
    return manifest.stem().string() + "." + filter + ext;
}

struct ManifestReader
{
    std::filesystem::path dir;
    json doc;

    explicit ManifestReader(const std::filesystem::path& path) : dir(path.parent_path())
    {
        const Bytes bytes = read_file(path);
        try {
            doc = json::parse(bytes.begin(), bytes.end());
        } catch (const json::parse_error& e) {
            throw FormatError(path.string() + ": " + e.what(), e.byte);
        }
        const int version = get<int>(doc, "version", "manifest");
        if (version != manifest_version) {
            throw FormatError(path.string() + ": unsupported manifest version " + std::to_string(version), 0);
        }
    }

    template <class T>
    static T get(const json& obj, const char* key, const std::string& where)
    {
        if (!obj.is_object() || !obj.contains(key)) throw FormatError(where + ": missing field '" + key + "'", 0);
        try {
            return obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw FormatError(where + "." + key + ": " + e.what(), 0);
        }
    }

    std::filesystem::path payload(const json& obj, const char* key, const std::string& where) const
    {
        return dir / get<std::string>(obj, key, where);
    }

    static Offset offset(const json& part, const std::string& where)
    {
        const auto v = get<std::vector<int>>(part, "anchor", where);
        if (v.size() != 2) throw FormatError(where + ".anchor: expected [dy, dx]", 0);
        return {v[0], v[1]};
    }

    static Deformation deformation(const json& part, const std::string& where)
    {
        const auto v = get<std::vector<double>>(part, "deformation", where);
        if (v.size() != 4) throw FormatError(where + ".deformation: expected [cdx, cdy, cdxx, cdyy]", 0);
        return {v[0], v[1], v[2], v[3]};
    }

    static std::optional<PruningThresholds> thresholds(const json& obj, const char* key, const std::string& where)
    {
        if (!obj.contains(key)) return std::nullopt;
        return PruningThresholds{get<std::vector<double>>(obj, key, where)};
    }
};

}  // namespace

void save_model(const std::filesystem::path& manifest, const PartModel& model)
{
    const auto dir = manifest.parent_path();
    json doc;
    doc["version"] = manifest_version;
    doc["kind"] = "dense";
    doc["channels"] = model.channels();
    doc["bias"] = model.bias;
    const std::string root = payload_name(manifest, "root", ".t3f");
    write_t3f(dir / root, model.root);
    doc["root"] = root;
    doc["parts"] = json::array();
    for (std::size_t i = 0; i < model.parts.size(); ++i) {
        const PartSpec& p = model.parts[i];
        const std::string name = payload_name(manifest, "part" + std::to_string(i), ".t3f");
        write_t3f(dir / name, p.filter);
        doc["parts"].push_back({{"payload", name},
                                {"anchor", offset_json(p.anchor)},
                                {"deformation", deformation_json(p.deformation)},
                                {"search_radius", p.search_radius}});
    }
    write_manifest(manifest, doc);
}

void save_model(const std::filesystem::path& manifest, const DecomposedModel& model)
{
    const auto dir = manifest.parent_path();
    json doc;
    doc["version"] = manifest_version;
    doc["kind"] = "decomposed";
    doc["channels"] = model.channels();
    doc["bias"] = model.bias;
    const std::string root = payload_name(manifest, "root", ".cpf");
    write_cpf(dir / root, model.root.cp);
    doc["root"] = root;
    doc["root_rank"] = model.root.rank();
    doc["root_residual"] = model.root.residual;
    if (model.root.thresholds) doc["root_thresholds"] = model.root.thresholds->values;
    doc["parts"] = json::array();
    for (std::size_t i = 0; i < model.parts.size(); ++i) {
        const DecomposedPart& p = model.parts[i];
        const std::string name = payload_name(manifest, "part" + std::to_string(i), ".cpf");
        write_cpf(dir / name, p.filter.cp);
        json entry{{"payload", name},
                   {"anchor", offset_json(p.anchor)},
                   {"deformation", deformation_json(p.deformation)},
                   {"search_radius", p.search_radius},
                   {"rank", p.filter.rank()},
                   {"residual", p.filter.residual}};
        if (p.filter.thresholds) entry["thresholds"] = p.filter.thresholds->values;
        doc["parts"].push_back(std::move(entry));
    }
    write_manifest(manifest, doc);
}

namespace {

PartModel read_dense(const ManifestReader& mr)
{
    PartModel m;
    m.bias = ManifestReader::get<double>(mr.doc, "bias", "manifest");
    m.root = read_t3f(mr.payload(mr.doc, "root", "manifest"));
    const json parts = mr.doc.value("parts", json::array());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string where = filter_name(i + 1);
        m.parts.push_back({read_t3f(mr.payload(parts[i], "payload", where)), ManifestReader::offset(parts[i], where),
                           ManifestReader::deformation(parts[i], where),
                           ManifestReader::get<int>(parts[i], "search_radius", where)});
    }
    return m;
}

DecomposedFilter read_filter(const ManifestReader& mr, const json& obj, const char* payload_key, const char* rank_key,
                             const char* residual_key, const char* thresholds_key, const std::string& where)
{
    DecomposedFilter f;
    f.cp = read_cpf(mr.payload(obj, payload_key, where));
    if (obj.contains(rank_key) && ManifestReader::get<std::size_t>(obj, rank_key, where) != f.rank()) {
        throw FormatError(where + ": manifest rank disagrees with payload rank", 0);
    }
    f.residual = obj.value(residual_key, 0.0);
    f.thresholds = ManifestReader::thresholds(obj, thresholds_key, where);
    return f;
}

DecomposedModel read_decomposed(const ManifestReader& mr)
{
    DecomposedModel m;
    m.bias = ManifestReader::get<double>(mr.doc, "bias", "manifest");
    m.root = read_filter(mr, mr.doc, "root", "root_rank", "root_residual", "root_thresholds", "root");
    const json parts = mr.doc.value("parts", json::array());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string where = filter_name(i + 1);
        m.parts.push_back({read_filter(mr, parts[i], "payload", "rank", "residual", "thresholds", where),
                           ManifestReader::offset(parts[i], where), ManifestReader::deformation(parts[i], where),
                           ManifestReader::get<int>(parts[i], "search_radius", where)});
    }
    return m;
}

void check_channels(const ManifestReader& mr, std::size_t actual)
{
    if (mr.doc.contains("channels") && ManifestReader::get<std::size_t>(mr.doc, "channels", "manifest") != actual) {
        throw FormatError("manifest channels disagree with root payload", 0);
    }
}

}  // namespace

AnyModel load_model(const std::filesystem::path& manifest)
{
    const ManifestReader mr(manifest);
    const std::string kind = mr.doc.value("kind", "dense");
    if (kind == "dense") {
        PartModel m = read_dense(mr);
        check_channels(mr, m.channels());
        return m;
    }
    if (kind == "decomposed") {
        DecomposedModel m = read_decomposed(mr);
        check_channels(mr, m.channels());
        return m;
    }
    throw FormatError(manifest.string() + ": unknown model kind '" + kind + "'", 0);
}

PartModel load_part_model(const std::filesystem::path& manifest)
{
    AnyModel m = load_model(manifest);
    if (auto* p = std::get_if<PartModel>(&m)) return std::move(*p);
    throw std::invalid_argument(manifest.string() + " holds a decomposed model, expected dense");
}

DecomposedModel load_decomposed_model(const std::filesystem::path& manifest)
{
    AnyModel m = load_model(manifest);
    if (auto* p = std::get_if<DecomposedModel>(&m)) return std::move(*p);
    throw std::invalid_argument(manifest.string() + " holds a dense model, expected decomposed");
}

}  // namespace cpdpm
