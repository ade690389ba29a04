#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rulkit/ingest.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

/// Settings of the preprocessing pipeline; identical for every subset.
struct PipelineConfig {
    std::uint32_t rul_cap = 120;
    double alpha = 0.3;          // exponential smoothing weight
    std::size_t window_len = 30;
    std::size_t stride = 1;
    std::size_t expected_conditions = 1;

    void validate() const;
    bool operator==(const PipelineConfig&) const = default;
};

/// Operating-condition grouping fit on training data: each distinct
/// settings triple, quantized to one decimal place, is one group.  Group
/// ids are assigned in sorted-triple order so they are stable across calls.
class ConditionMap {
public:
    using Key = std::array<long long, 3>;

    static Key quantize(const std::array<double, kNumSettings>& settings);

    static ConditionMap fit(const TrajectorySet& set);

    std::size_t group_count() const { return keys_.size(); }

    /// Group id for a record; IntegrityError if its quantized triple was
    /// never seen at fit time.
    int id_of(const CycleRecord& rec) const;

private:
    std::vector<Key> keys_;  // sorted
};

/// Per-record group ids, one inner vector per trajectory, plus the map
/// that produced them.
struct ConditionAssignment {
    ConditionMap map;
    std::vector<std::vector<int>> ids;
    std::size_t group_count = 0;
};

/// Detect condition groups and assign ids.  Throws IntegrityError when the
/// detected group count differs from expected_k (the regimes are widely
/// separated; a mismatch signals bad data or bad quantization).
ConditionAssignment detect_conditions(const TrajectorySet& set,
                                      std::size_t expected_k);

/// Group count alone, with no expectation to check against.
std::size_t count_conditions(const TrajectorySet& set);

/// Assign ids using an already-fitted map (e.g. test data against the
/// training-fit grouping).
std::vector<std::vector<int>> assign_conditions(const TrajectorySet& set,
                                                const ConditionMap& map);

/// Min/max per (condition group, sensor), fit on training values only.
class GroupStats {
public:
    struct MinMax {
        double min = 0;
        double max = 0;
    };

    GroupStats() = default;
    explicit GroupStats(std::size_t groups);

    std::size_t group_count() const { return cells_.size(); }
    const MinMax& at(std::size_t group, std::size_t sensor) const;
    MinMax& at(std::size_t group, std::size_t sensor);

private:
    std::vector<std::array<MinMax, kNumSensors>> cells_;
};

/// Capped, normalized RUL labels for every cycle of a training trajectory:
/// min(max(T - t, 0), cap) / cap.
std::vector<double> assign_rul_labels(const Trajectory& traj, std::uint32_t cap);

GroupStats fit_group_minmax(const TrajectorySet& train_set,
                            const std::vector<std::vector<int>>& ids,
                            std::size_t group_count);

/// (value - min) / (max - min); 0.0 by convention for a constant channel.
/// Values outside the training range are not clipped.
double apply_minmax(double value, const GroupStats::MinMax& stat);

/// First-order exponential smoothing: out[0] = in[0],
/// out[i] = alpha*in[i] + (1-alpha)*out[i-1].
std::vector<double> exp_smooth(const std::vector<double>& series, double alpha);

/// One model input: L x 21 normalized/smoothed matrix plus the normalized
/// RUL at the window's final cycle.
struct WindowSample {
    TensorD matrix;  // {window_len, kNumSensors}
    double target = 0;
    std::uint32_t unit_id = 0;
    std::uint32_t end_cycle = 0;
};

/// Sliding windows over a fully transformed trajectory, ending at cycles
/// L, L+stride, ...  A trajectory shorter than L yields a single window
/// left-padded by replicating the first row.
std::vector<WindowSample> make_windows(const TensorD& features,
                                       const std::vector<double>& labels,
                                       std::uint32_t unit_id, std::size_t L,
                                       std::size_t stride);

/// The single window ending at the final cycle (the standard evaluation
/// input per test unit), padded by the same rule.
WindowSample last_window(const TensorD& features, std::uint32_t unit_id,
                         std::size_t L, double label = 0.0);

/// Training-fit pipeline state: condition grouping and per-group min/max.
/// Applied unchanged to test data (test values may leave [0,1]).
struct FittedPipeline {
    PipelineConfig config;
    ConditionMap conditions;
    GroupStats stats;
};

FittedPipeline fit_pipeline(const TrajectorySet& train_set,
                            const PipelineConfig& config);

/// Normalize + smooth one trajectory into an {N, 21} matrix.
TensorD transform_unit(const FittedPipeline& pipe, const Trajectory& traj);

/// Full training transform: labels, normalization, smoothing, windows.
std::vector<WindowSample> transform_training_set(const FittedPipeline& pipe,
                                                 const TrajectorySet& train_set);

/// Test transform: one last-window sample per unit, in file order.
std::vector<WindowSample> transform_test_last_windows(const FittedPipeline& pipe,
                                                      const TrajectorySet& test_set);

} // namespace rulkit
