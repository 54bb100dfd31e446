#pragma once

#include "cpdpm/cp_als.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cpdpm {

/// Integer offset in feature cells, rows first.
struct Offset
{
    int dy = 0;
    int dx = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

/**
 * Deformation cost d . psi(dy, dx) with psi = (dx, dy, dx^2, dy^2), the
 * quadratic displacement feature of star-structured part models. Swap this
 * function to change the deformation form.
 */
struct Deformation
{
    double cdx = 0;
    double cdy = 0;
    double cdxx = 0;
    double cdyy = 0;

    double penalty(int dy, int dx) const
    {
        return cdx * dx + cdy * dy + cdxx * double(dx) * dx + cdyy * double(dy) * dy;
    }
    friend bool operator==(const Deformation&, const Deformation&) = default;
};

struct PartSpec
{
    Tensor3d filter;
    /// Nominal top-left of the part window relative to the root's top-left.
    Offset anchor;
    Deformation deformation;
    /// Max |displacement| per axis from the anchor.
    int search_radius = 1;
};

struct PartModel
{
    Tensor3d root;
    std::vector<PartSpec> parts;
    double bias = 0;

    std::size_t channels() const { return root.l(); }
};

struct PruningThresholds
{
    /// values[i] bounds the running score after the first i+1 CP terms.
    std::vector<double> values;
};

struct DecomposedFilter
{
    CPModeld cp;
    /// ||f - reconstruct(cp)||_F against the dense filter it came from.
    double residual = 0;
    std::optional<PruningThresholds> thresholds;

    std::size_t rank() const { return cp.rank(); }
};

struct DecomposedPart
{
    DecomposedFilter filter;
    Offset anchor;
    Deformation deformation;
    int search_radius = 1;
};

struct DecomposedModel
{
    DecomposedFilter root;
    std::vector<DecomposedPart> parts;
    double bias = 0;

    std::size_t channels() const { return root.cp.dims().l; }
    /// (R_0, R_1, ..., R_n)
    std::vector<std::size_t> ranks() const;
    bool calibrated() const;

    /// Filter i: 0 is the root, i > 0 is part i-1.
    const DecomposedFilter& filter(std::size_t i) const { return i == 0 ? root : parts[i - 1].filter; }
    DecomposedFilter& filter(std::size_t i) { return i == 0 ? root : parts[i - 1].filter; }
    std::size_t filter_count() const { return parts.size() + 1; }
};

struct Violation
{
    std::string field;
    std::string rule;
};

std::vector<Violation> validate(const PartModel& model);
std::vector<Violation> validate(const DecomposedModel& model);

/// Reconstructs every filter; thresholds are dropped.
PartModel reconstruct_model(const DecomposedModel& model);

/// Explicit per-filter ranks, root first.
struct ExplicitRanks
{
    std::vector<std::size_t> ranks;
};

/// Per-filter rank selection.
struct SelectedRanks
{
    double e = 1.0;
    RankCriterion criterion = RankCriterion::GainSquared;
    /// Absolute e for GainSquared is e * ||f||_F when this is set.
    bool scale_by_filter_norm = true;
    std::optional<std::size_t> max_rank;
};

using RankChoice = std::variant<ExplicitRanks, SelectedRanks>;

/// (S, T, T, ..., T): rank S for the root, T for every part.
ExplicitRanks root_part_ranks(const PartModel& model, std::size_t root_rank, std::size_t part_rank);

/// Break-even rank of every filter.
ExplicitRanks break_even_ranks(const PartModel& model);

DecomposedModel decompose_model(const PartModel& model, const RankChoice& ranks, const AlsOptions& opts);

/// Serialized bytes of the filter payload files, split into bulk element data and per-file overhead.
struct PayloadSize
{
    std::size_t element_bytes = 0;
    std::size_t overhead_bytes = 0;
    std::size_t total() const { return element_bytes + overhead_bytes; }
};

PayloadSize payload_size(const PartModel& model);
PayloadSize payload_size(const DecomposedModel& model);

/**
 * Model manifests (JSON) with binary filter payloads next to them. Dense
 * models reference T3F files, decomposed models CPF files. See
 * docs/manifest.schema.json.
 */
void save_model(const std::filesystem::path& manifest, const PartModel& model);
void save_model(const std::filesystem::path& manifest, const DecomposedModel& model);

using AnyModel = std::variant<PartModel, DecomposedModel>;
AnyModel load_model(const std::filesystem::path& manifest);
PartModel load_part_model(const std::filesystem::path& manifest);
DecomposedModel load_decomposed_model(const std::filesystem::path& manifest);

}  // namespace cpdpm
