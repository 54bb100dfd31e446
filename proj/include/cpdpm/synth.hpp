#pragma once

#include "cpdpm/detector.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace cpdpm {

struct Extent2
{
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Synthetic model geometry. Defaults: a 5x11x32 root and eight 8x8x32 parts.
struct ModelGenSpec
{
    Extent2 root{5, 11};
    std::size_t parts = 8;
    Extent2 part{8, 8};
    std::size_t channels = 32;
    /**
     * Build each filter as a sum of this many rank-1 terms. With `noise == 0`
     * the factors sit on a coarse dyadic grid, so the filters are exactly low
     * rank even after rounding to float32.
     */
    std::optional<std::size_t> low_rank = std::nullopt;
    /// Relative Frobenius energy of full-rank noise added on top of a low-rank filter.
    double noise = 0;
    /// Weight ratio between successive low-rank terms.
    double decay = 0.6;
    int search_radius = 3;
    Deformation deformation{0.0, 0.0, 0.02, 0.02};
    double bias = 0;
    std::uint64_t seed = 0;
};

/// Filters come out with unit Frobenius norm unless they are on the dyadic grid.
PartModel gen_model(const ModelGenSpec& spec);

struct PlantedObject
{
    Hypothesis hyp;  // level, root and part positions
};

struct SyntheticScene
{
    std::vector<FeatureMapd> pyramid;
    std::vector<PlantedObject> planted;
    double noise_level = 0;
    std::uint64_t seed = 0;
};

struct SceneGenSpec
{
    std::size_t objects = 3;
    /// Standard deviation of the Gaussian background.
    double noise = 1.0;
    /// Each planted filter pattern is amplitude * f / ||f||_F.
    double amplitude = 4.0;
    /// Level sizes (rows x cols); channels come from the model.
    std::vector<Extent2> levels{{36, 44}, {30, 36}, {24, 30}};
    std::uint64_t seed = 0;
};

/**
 * Gaussian background with filter-shaped patterns planted at random
 * non-overlapping root positions; parts are displaced from their anchors by
 * random offsets within the search radius. Values are rounded to float32.
 */
SyntheticScene gen_scene(const PartModel& model, const SceneGenSpec& spec);

/// Planted objects as calibration positives (pointing into `scene.pyramid`).
std::vector<PositiveExample> positives_from(const SyntheticScene& scene);

/// scene.json plus one T3F file per level.
void save_scene(const std::filesystem::path& dir, const SyntheticScene& scene);
SyntheticScene load_scene(const std::filesystem::path& dir);

}  // namespace cpdpm
