#pragma once

#include "cpdpm/synth.hpp"

#include <string>
#include <variant>
#include <vector>

namespace cpdpm {

/// Intersection-over-union of two equally sized root boxes on the same level.
double box_iou(Pos a, Pos b, Extent2 box);

/// Greedy suppression by descending score, per level: drops boxes with IoU >= overlap against a kept one.
std::vector<Detection> nms(std::vector<Detection> detections, Extent2 root_box, double overlap = 0.5);

struct RocPoint
{
    double tau = 0;
    std::uint64_t false_positives = 0;
    std::uint64_t missed = 0;
    /// False detections per scene.
    double false_positive_rate = 0;
    /// False detections per examined root window.
    double false_positives_per_window = 0;
    /// Fraction of planted objects without a matching detection.
    double misdetection_rate = 0;
};

/// Detections of one scene at tau = -inf together with its ground truth.
struct SceneRun
{
    std::vector<Detection> detections;
    std::vector<PlantedObject> truth;
    std::uint64_t windows = 0;
};

/**
 * One point per tau (sorted ascending): keep detections with score >= tau,
 * apply NMS, then match in descending score order to unmatched planted
 * objects on the same level within `match_radius` cells (Chebyshev) of the
 * root position. Unmatched detections are false positives.
 */
std::vector<RocPoint> roc_curve(const std::vector<SceneRun>& runs, Extent2 root_box, std::vector<double> taus,
                                int match_radius = 1, double nms_overlap = 0.5);

/// count evenly spaced values from lo to hi inclusive.
std::vector<double> tau_grid(double lo, double hi, std::size_t count);

using Scorer = std::variant<const PartModel*, const DecomposedModel*>;

struct RocOptions
{
    bool pruning = false;
    int match_radius = 1;
    double nms_overlap = 0.5;
};

/// Runs the scorer (dense or CP) on every scene and builds the ROC curve.
std::vector<RocPoint> roc_eval(const Scorer& scorer, const std::vector<SyntheticScene>& scenes,
                               const std::vector<double>& taus, const RocOptions& opts = {});

/// Largest |misdetection difference| over matching tau points.
double max_misdetection_gap(const std::vector<RocPoint>& a, const std::vector<RocPoint>& b);
/// Sum of |misdetection difference| over matching tau points.
double total_misdetection_gap(const std::vector<RocPoint>& a, const std::vector<RocPoint>& b);

struct BenchConfig
{
    std::string label;
    /// Per-filter ranks, root first. Empty runs the dense baseline.
    std::vector<std::size_t> ranks;
    bool pruning = false;
};

struct BenchRow
{
    std::string label;
    std::vector<std::size_t> ranks;
    bool pruning = false;
    std::uint64_t multiplications = 0;
    std::uint64_t executed_multiplications = 0;
    std::uint64_t dense_multiplications = 0;
    /// dense_multiplications / multiplications
    double counter_gain = 1;
    /// Gain formula per filter, root first.
    std::vector<double> theoretical_gains;
    double median_seconds = 0;
    double dense_median_seconds = 0;
    std::size_t detections = 0;
    /// Size of the symmetric difference of (level, y, x) detection sets against the dense run.
    std::size_t detections_delta = 0;
    std::uint64_t positions_pruned = 0;
};

struct BenchOptions
{
    double tau = 0;
    /// Timed repetitions after one discarded warm-up run; the median is reported.
    int repetitions = 5;
    AlsOptions als;
};

/**
 * Dense baseline plus each configuration on one scene. Pruning thresholds
 * are calibrated on the scene's planted objects.
 */
std::vector<BenchRow> bench(const PartModel& model, const SyntheticScene& scene, const std::vector<BenchConfig>& configs,
                            const BenchOptions& opts = {});

std::string roc_csv(const std::vector<RocPoint>& points);
std::string bench_csv(const std::vector<BenchRow>& rows);
std::string detections_csv(const std::vector<Detection>& detections);
std::string stats_json(const DetectStats& stats);

}  // namespace cpdpm
