#pragma once

#include "cpdpm/dpm_model.hpp"
#include "cpdpm/sepconv.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace cpdpm {

/// Top-left corner of a filter window on a feature map, in cells.
struct Pos
{
    int y = 0;
    int x = 0;
    friend bool operator==(const Pos&, const Pos&) = default;
    friend auto operator<=>(const Pos&, const Pos&) = default;
};

struct Hypothesis
{
    std::size_t level = 0;
    Pos root;
    std::vector<Pos> parts;
    double score = 0;
};

struct Detection
{
    Hypothesis hyp;
    int model_id = 0;
    double score = 0;
    double tau = 0;
};

struct DetectStats
{
    /// Root positions looked at.
    std::uint64_t positions_examined = 0;
    /// pruned_at_rank[r] counts root positions dropped after CP term r+1.
    std::vector<std::uint64_t> pruned_at_rank;
    /// Root positions that survived their own thresholds but lost a part to pruning.
    std::uint64_t killed_by_parts = 0;
    /// Part window candidates dropped by part thresholds.
    std::uint64_t part_candidates_pruned = 0;
    /// Convention count (see ScoreMap).
    std::uint64_t multiplications = 0;
    std::uint64_t executed_multiplications = 0;
    double wall_seconds = 0;

    std::uint64_t positions_pruned() const;
    std::uint64_t positions_surviving() const { return positions_examined - positions_pruned(); }
    void merge(const DetectStats& other);
};

/// Best placement of one part for one root position.
struct Placement
{
    Pos pos;
    /// Part response minus deformation penalty.
    double score = -std::numeric_limits<double>::infinity();
};

/// Root-position score map of one level, with the chosen part positions.
struct LevelScores
{
    /// H0' x W0'; -inf where the position was pruned.
    Matrixd total;
    /// placements[i][y * W0' + x] for part i.
    std::vector<std::vector<Pos>> placements;
};

struct Window
{
    int y0 = 0, y1 = -1, x0 = 0, x1 = -1;  // inclusive bounds
    bool empty() const { return y1 < y0 || x1 < x0; }
};

/// anchor +/- radius around root + anchor, clipped to a part score map of size height x width.
Window part_window(const Offset& anchor, int radius, Pos root, Eigen::Index height, Eigen::Index width);

/**
 * Reference scorer: root response at p_0 plus, for every part, its response
 * at p_i minus the deformation cost of p_i relative to p_0 + anchor, plus the
 * model bias. Dense dot products, no decomposition.
 */
double score_hypothesis(const PartModel& model, const FeatureMapd& level, Pos root, std::span<const Pos> parts);

/**
 * argmax over the window of part_scores(p) - d . psi(p - (root + anchor)).
 * Ties go to the smallest (dy, dx). Throws if the clipped window is empty.
 */
Placement best_part_placement(const PartSpec& part, const ScoreMapd& part_scores, Pos root);
Placement best_part_placement(const Offset& anchor, const Deformation& deformation, int radius,
                              const Matrixd& part_scores, Pos root);

using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RankwiseResult
{
    /// Full CP score at surviving active positions, -inf elsewhere.
    Matrixd scores;
    /// 0 if not pruned, otherwise the 1-based term count after which the position was dropped.
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pruned_after;
    std::uint64_t active = 0;
    std::uint64_t pruned = 0;
    std::uint64_t multiplications = 0;
    std::uint64_t executed_multiplications = 0;
};

/**
 * CP correlation accumulated term by term over the active positions of
 * `mask`, in the model's descending-weight order. With thresholds, a
 * position is dropped as soon as its running sum after term r is strictly
 * below values[r-1]. The arithmetic for a position does not depend on which
 * other positions are active, so results are reproducible between
 * calibration and detection.
 *
 * `trace`, when given, receives the running sum of every active position
 * after every term, term-major, positions in row-major order.
 */
RankwiseResult evaluate_rankwise(const FeatureMapd& level, const CPModeld& model, const Mask& mask,
                                 const PruningThresholds* thresholds = nullptr, std::vector<double>* trace = nullptr);

/// Running sums at one position after 1, 2, ..., R terms.
std::vector<double> partial_scores(const FeatureMapd& level, const CPModeld& model, Pos pos);

struct PositiveExample
{
    const FeatureMapd* level = nullptr;
    Hypothesis hyp;
};

/**
 * Sets t_i for every filter to the minimum, over the positives, of the
 * running CP score after i terms at that filter's position in the positive.
 */
DecomposedModel calibrate_thresholds(DecomposedModel model, std::span<const PositiveExample> positives);

struct DetectOptions
{
    bool pruning = true;
    /// A part whose whole window is pruned kills the hypothesis; otherwise it contributes 0.
    bool part_prune_kills = true;
    int model_id = 0;
};

struct DetectResult
{
    /// Sorted by (level, y, x).
    std::vector<Detection> detections;
    DetectStats stats;
    std::vector<LevelScores> levels;
};

/**
 * Detection with CP filters. Each root position accumulates its CP score
 * term by term and, with pruning on, is dropped once the running sum falls
 * below the root threshold for that term. Surviving positions then place
 * every part: part candidates inside the anchor window are accumulated term
 * by term under the part's thresholds, pruned candidates are excluded, and
 * the best remaining candidate (with deformation cost) is used. Positions
 * with total score >= tau are reported.
 */
DetectResult detect(const DecomposedModel& model, std::span<const FeatureMapd> pyramid, double tau,
                    const DetectOptions& opts = {});

/// Dense baseline with the original filters.
DetectResult detect_dense(const PartModel& model, std::span<const FeatureMapd> pyramid, double tau, int model_id = 0);

/// Runs every component and keeps, per (level, y, x), the best-scoring one.
DetectResult detect_mixture(std::span<const DecomposedModel> models, std::span<const FeatureMapd> pyramid, double tau,
                            const DetectOptions& opts = {});

/// Throws when some root position on `level` has an empty part window.
void check_expressible(const DecomposedModel& model, const Dims3& level);
void check_expressible(const PartModel& model, const Dims3& level);

}  // namespace cpdpm
