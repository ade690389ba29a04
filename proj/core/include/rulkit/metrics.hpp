#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "rulkit/model.hpp"
#include "rulkit/preprocess.hpp"

namespace rulkit {

struct Metrics {
    double rmse = 0;
    double score = 0;
    std::size_t n = 0;
    std::vector<double> residuals;    // predicted - true, in cycles
    std::vector<double> predictions;  // cycles
    std::vector<double> truths;       // cycles (capped)
};

/// Root mean squared error over residuals in cycles.
double rmse(std::span<const double> preds, std::span<const double> truths);

/// Asymmetric prognostic score: sum over samples of exp(-d/13)-1 for early
/// predictions (d < 0) and exp(d/10)-1 for late ones (d >= 0), where
/// d = predicted - true.  Late predictions cost more.
double score(std::span<const double> preds, std::span<const double> truths);

/// Evaluate a trained parameter store on a test split: one last-window
/// prediction per unit using training-fit normalization, predictions clamped
/// to [0,1] then rescaled by rul_cap, truth capped at rul_cap.
template <typename T>
Metrics evaluate_model(const ParameterStore<T>& params, const ModelConfig& mcfg,
                       const FittedPipeline& pipe, const TrajectorySet& test_set,
                       std::span<const std::uint32_t> truth) {
    if (truth.size() != test_set.unit_count())
        throw IntegrityError("truth count " + std::to_string(truth.size()) +
                             " does not match test unit count " +
                             std::to_string(test_set.unit_count()));
    if (test_set.unit_count() == 0)
        throw UsageError("evaluate_model: empty test set");
    const double cap = double(pipe.config.rul_cap);
    const auto windows = transform_test_last_windows(pipe, test_set);
    Metrics m;
    m.n = windows.size();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const Tensor<T> w = windows[i].matrix.template cast<T>();
        const double yhat = std::clamp(predict(params, mcfg, w), 0.0, 1.0);
        const double pred_cycles = yhat * cap;
        const double true_cycles = std::min(double(truth[i]), cap);
        m.predictions.push_back(pred_cycles);
        m.truths.push_back(true_cycles);
        m.residuals.push_back(pred_cycles - true_cycles);
    }
    m.rmse = rmse(m.predictions, m.truths);
    m.score = score(m.predictions, m.truths);
    return m;
}

} // namespace rulkit
