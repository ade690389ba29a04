#include "rulkit/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rulkit/errors.hpp"

namespace rulkit {

void PipelineConfig::validate() const {
    if (rul_cap == 0) throw ConfigError("rul_cap must be positive");
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("alpha must lie in [0, 1]");
    if (window_len < 1) throw ConfigError("window_len must be >= 1");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (expected_conditions < 1)
        throw ConfigError("expected_conditions must be >= 1");
}

ConditionMap::Key ConditionMap::quantize(
    const std::array<double, kNumSettings>& settings) {
    Key k;
    for (std::size_t i = 0; i < kNumSettings; ++i)
        k[i] = std::llround(settings[i] * 10.0);
    return k;
}

ConditionMap ConditionMap::fit(const TrajectorySet& set) {
    std::set<Key> keys;
    for (const auto& traj : set.trajectories)
        for (const auto& rec : traj.records) keys.insert(quantize(rec.settings));
    ConditionMap map;
    map.keys_.assign(keys.begin(), keys.end());
    return map;
}

int ConditionMap::id_of(const CycleRecord& rec) const {
    const Key k = quantize(rec.settings);
    const auto it = std::lower_bound(keys_.begin(), keys_.end(), k);
    if (it == keys_.end() || *it != k)
        throw IntegrityError("settings triple outside the fitted condition groups");
    return static_cast<int>(it - keys_.begin());
}

ConditionAssignment detect_conditions(const TrajectorySet& set,
                                      std::size_t expected_k) {
    if (expected_k < 1) throw ConfigError("expected_k must be >= 1");
    ConditionAssignment out;
    out.map = ConditionMap::fit(set);
    out.group_count = out.map.group_count();
    if (out.group_count != expected_k)
        throw IntegrityError("detected " + std::to_string(out.group_count) +
                             " condition groups, expected " +
                             std::to_string(expected_k));
    out.ids = assign_conditions(set, out.map);
    return out;
}

std::size_t count_conditions(const TrajectorySet& set) {
    return ConditionMap::fit(set).group_count();
}

std::vector<std::vector<int>> assign_conditions(const TrajectorySet& set,
                                                const ConditionMap& map) {
    std::vector<std::vector<int>> ids;
    ids.reserve(set.unit_count());
    for (const auto& traj : set.trajectories) {
        std::vector<int> unit_ids;
        unit_ids.reserve(traj.length());
        for (const auto& rec : traj.records) unit_ids.push_back(map.id_of(rec));
        ids.push_back(std::move(unit_ids));
    }
    return ids;
}

GroupStats::GroupStats(std::size_t groups) : cells_(groups) {}

const GroupStats::MinMax& GroupStats::at(std::size_t group,
                                         std::size_t sensor) const {
    if (group >= cells_.size() || sensor >= kNumSensors)
        throw UsageError("GroupStats index out of range");
    return cells_[group][sensor];
}

GroupStats::MinMax& GroupStats::at(std::size_t group, std::size_t sensor) {
    if (group >= cells_.size() || sensor >= kNumSensors)
        throw UsageError("GroupStats index out of range");
    return cells_[group][sensor];
}

std::vector<double> assign_rul_labels(const Trajectory& traj,
                                      std::uint32_t cap) {
    if (cap == 0) throw ConfigError("rul_cap must be positive");
    const double t_max = static_cast<double>(traj.length());
    std::vector<double> labels;
    labels.reserve(traj.length());
    for (const auto& rec : traj.records) {
        const double rul = std::max(t_max - double(rec.cycle), 0.0);
        labels.push_back(std::min(rul, double(cap)) / double(cap));
    }
    return labels;
}

GroupStats fit_group_minmax(const TrajectorySet& train_set,
                            const std::vector<std::vector<int>>& ids,
                            std::size_t group_count) {
    if (ids.size() != train_set.unit_count())
        throw UsageError("condition ids do not match the trajectory set");
    GroupStats stats(group_count);
    std::vector<std::array<bool, kNumSensors>> seen(
        group_count, std::array<bool, kNumSensors>{});
    for (std::size_t u = 0; u < train_set.unit_count(); ++u) {
        const auto& traj = train_set.trajectories[u];
        if (ids[u].size() != traj.length())
            throw UsageError("condition ids do not match trajectory length");
        for (std::size_t i = 0; i < traj.length(); ++i) {
            const int g = ids[u][i];
            if (g < 0 || std::size_t(g) >= group_count)
                throw UsageError("condition id out of range");
            for (std::size_t s = 0; s < kNumSensors; ++s) {
                const double v = traj.records[i].sensors[s];
                auto& mm = stats.at(g, s);
                if (!seen[g][s]) {
                    mm.min = mm.max = v;
                    seen[g][s] = true;
                } else {
                    mm.min = std::min(mm.min, v);
                    mm.max = std::max(mm.max, v);
                }
            }
        }
    }
    for (std::size_t g = 0; g < group_count; ++g)
        for (std::size_t s = 0; s < kNumSensors; ++s)
            if (!seen[g][s])
                throw IntegrityError("condition group " + std::to_string(g) +
                                     " has no training values");
    return stats;
}

double apply_minmax(double value, const GroupStats::MinMax& stat) {
    const double range = stat.max - stat.min;
    if (range == 0.0) return 0.0;
    return (value - stat.min) / range;
}

std::vector<double> exp_smooth(const std::vector<double>& series, double alpha) {
    if (series.empty()) throw UsageError("exp_smooth: empty series");
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("exp_smooth: alpha must lie in [0, 1]");
    std::vector<double> out(series.size());
    out[0] = series[0];
    for (std::size_t i = 1; i < series.size(); ++i)
        out[i] = alpha * series[i] + (1.0 - alpha) * out[i - 1];
    return out;
}

namespace {

// Window ending at row `end` (1-based cycle index), left-padded with
// replicas of row 0 when fewer than L rows are available.
TensorD cut_window(const TensorD& features, std::size_t end, std::size_t L) {
    TensorD w = TensorD::zeros({L, kNumSensors});
    const std::size_t pad = end < L ? L - end : 0;
    const std::size_t first = end < L ? 0 : end - L;
    for (std::size_t r = 0; r < L; ++r) {
        const std::size_t src = r < pad ? 0 : first + (r - pad);
        for (std::size_t s = 0; s < kNumSensors; ++s)
            w(r, s) = features(src, s);
    }
    return w;
}

} // namespace

std::vector<WindowSample> make_windows(const TensorD& features,
                                       const std::vector<double>& labels,
                                       std::uint32_t unit_id, std::size_t L,
                                       std::size_t stride) {
    if (L < 1) throw ConfigError("window_len must be >= 1");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    const std::size_t n = features.dim(0);
    if (labels.size() != n)
        throw UsageError("labels do not match trajectory length");
    std::vector<WindowSample> out;
    if (n < L) {
        WindowSample w;
        w.matrix = cut_window(features, n, L);
        w.target = labels[n - 1];
        w.unit_id = unit_id;
        w.end_cycle = static_cast<std::uint32_t>(n);
        out.push_back(std::move(w));
        return out;
    }
    for (std::size_t end = L; end <= n; end += stride) {
        WindowSample w;
        w.matrix = cut_window(features, end, L);
        w.target = labels[end - 1];
        w.unit_id = unit_id;
        w.end_cycle = static_cast<std::uint32_t>(end);
        out.push_back(std::move(w));
    }
    return out;
}

WindowSample last_window(const TensorD& features, std::uint32_t unit_id,
                         std::size_t L, double label) {
    if (L < 1) throw ConfigError("window_len must be >= 1");
    const std::size_t n = features.dim(0);
    if (n == 0) throw UsageError("last_window: empty trajectory");
    WindowSample w;
    w.matrix = cut_window(features, n, L);
    w.target = label;
    w.unit_id = unit_id;
    w.end_cycle = static_cast<std::uint32_t>(n);
    return w;
}

FittedPipeline fit_pipeline(const TrajectorySet& train_set,
                            const PipelineConfig& config) {
    config.validate();
    FittedPipeline pipe;
    pipe.config = config;
    const auto detected = detect_conditions(train_set, config.expected_conditions);
    pipe.conditions = detected.map;
    pipe.stats =
        fit_group_minmax(train_set, detected.ids, detected.group_count);
    return pipe;
}

TensorD transform_unit(const FittedPipeline& pipe, const Trajectory& traj) {
    const std::size_t n = traj.length();
    if (n == 0) throw UsageError("transform_unit: empty trajectory");
    TensorD features = TensorD::zeros({n, kNumSensors});
    std::vector<double> channel(n);
    std::vector<int> group(n);
    for (std::size_t i = 0; i < n; ++i)
        group[i] = pipe.conditions.id_of(traj.records[i]);
    for (std::size_t s = 0; s < kNumSensors; ++s) {
        for (std::size_t i = 0; i < n; ++i)
            channel[i] = apply_minmax(traj.records[i].sensors[s],
                                      pipe.stats.at(group[i], s));
        const auto smoothed = exp_smooth(channel, pipe.config.alpha);
        for (std::size_t i = 0; i < n; ++i) features(i, s) = smoothed[i];
    }
    return features;
}

std::vector<WindowSample> transform_training_set(const FittedPipeline& pipe,
                                                 const TrajectorySet& train_set) {
    std::vector<WindowSample> out;
    for (const auto& traj : train_set.trajectories) {
        const auto labels = assign_rul_labels(traj, pipe.config.rul_cap);
        const auto features = transform_unit(pipe, traj);
        auto windows = make_windows(features, labels, traj.unit_id,
                                    pipe.config.window_len, pipe.config.stride);
        for (auto& w : windows) out.push_back(std::move(w));
    }
    return out;
}

std::vector<WindowSample> transform_test_last_windows(
    const FittedPipeline& pipe, const TrajectorySet& test_set) {
    std::vector<WindowSample> out;
    out.reserve(test_set.unit_count());
    for (const auto& traj : test_set.trajectories) {
        const auto features = transform_unit(pipe, traj);
        out.push_back(last_window(features, traj.unit_id, pipe.config.window_len));
    }
    return out;
}

} // namespace rulkit
