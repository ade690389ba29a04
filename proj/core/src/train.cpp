#include "rulkit/train.hpp"

#include <cmath>

namespace rulkit {

void LossHistory::append(double loss) {
    if (!std::isfinite(loss))
        throw NumericsError("loss history rejects non-finite values");
    losses_.push_back(loss);
}

double LossHistory::at(std::size_t epoch) const {
    if (epoch < 1 || epoch > losses_.size())
        throw UsageError("loss history has no epoch " + std::to_string(epoch));
    return losses_[epoch - 1];
}

double rolling_variance(const LossHistory& history, std::size_t k) {
    if (k < 5)
        throw UsageError("rolling variance needs 5 epochs of history");
    if (k > history.size())
        throw UsageError("rolling variance requested past recorded history");
    double mean = 0;
    for (std::size_t j = k - 4; j <= k; ++j) mean += history.at(j);
    mean /= 5.0;
    double var = 0;
    for (std::size_t j = k - 4; j <= k; ++j) {
        const double d = history.at(j) - mean;
        var += d * d;
    }
    return var / 5.0;
}

std::optional<std::size_t> stopping_criterion_variance(const LossHistory& history,
                                                       std::size_t min_epochs,
                                                       std::size_t patience) {
    const std::size_t first = std::max<std::size_t>(min_epochs + 1, 5);
    if (history.size() < first + patience) return std::nullopt;
    for (std::size_t k = first; k + patience <= history.size(); ++k) {
        const double vk = rolling_variance(history, k);
        bool held = true;
        for (std::size_t j = k + 1; j <= k + patience; ++j) {
            if (rolling_variance(history, j) < vk) {
                held = false;
                break;
            }
        }
        if (held) return k;
    }
    return std::nullopt;
}

std::optional<std::size_t> stopping_criterion_loss_min(const LossHistory& history,
                                                       std::size_t min_epochs,
                                                       std::size_t patience) {
    const std::size_t first = std::max<std::size_t>(min_epochs, 1);
    if (history.size() < first + patience) return std::nullopt;
    for (std::size_t k = first; k + patience <= history.size(); ++k) {
        const double lk = history.at(k);
        bool held = true;
        for (std::size_t j = k + 1; j <= k + patience; ++j) {
            if (history.at(j) < lk) {
                held = false;
                break;
            }
        }
        if (held) return k;
    }
    return std::nullopt;
}

double mse(std::span<const double> preds, std::span<const double> targets) {
    if (preds.empty()) throw UsageError("mse: empty batch");
    if (preds.size() != targets.size())
        throw UsageError("mse: prediction/target lengths disagree");
    double s = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - targets[i];
        s += d * d;
    }
    return s / double(preds.size());
}

} // namespace rulkit
