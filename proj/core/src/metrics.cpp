#include "rulkit/metrics.hpp"

#include <cmath>

#include "rulkit/errors.hpp"

namespace rulkit {

double rmse(std::span<const double> preds, std::span<const double> truths) {
    if (preds.empty()) throw UsageError("rmse: empty input");
    if (preds.size() != truths.size())
        throw UsageError("rmse: prediction/truth lengths disagree");
    double s = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - truths[i];
        s += d * d;
    }
    return std::sqrt(s / double(preds.size()));
}

double score(std::span<const double> preds, std::span<const double> truths) {
    if (preds.empty()) throw UsageError("score: empty input");
    if (preds.size() != truths.size())
        throw UsageError("score: prediction/truth lengths disagree");
    double s = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - truths[i];
        s += d < 0 ? std::exp(-d / 13.0) - 1.0 : std::exp(d / 10.0) - 1.0;
    }
    return s;
}

} // namespace rulkit
