#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rulkit/adam.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/model.hpp"
#include "rulkit/param_store.hpp"
#include "rulkit/preprocess.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tape.hpp"

namespace rulkit {

/// How training decides it is done.
///  - variance_plateau: train at least min_epochs, then stop at the first
///    epoch whose 5-epoch rolling loss variance is not undercut for
///    `patience` consecutive epochs (initial training; min_epochs 120).
///  - loss_minimum: train at least min_epochs, then stop at the first epoch
///    whose loss is not undercut for `patience` consecutive epochs
///    (fine-tuning; min_epochs 20).
enum class StopRule { variance_plateau, loss_minimum };

struct TrainConfig {
    double eta = 1e-4;
    double lambda = 1e-5;
    std::size_t batch_size = 64;
    std::size_t min_epochs = 120;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
    std::size_t max_epochs = 400;

    void validate() const {
        if (eta <= 0) throw ConfigError("eta must be positive");
        if (lambda < 0) throw ConfigError("lambda must be non-negative");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (min_epochs < 1) throw ConfigError("min_epochs must be >= 1");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    }

    /// Conventional minimum epoch counts per stop rule (120 / 20).
    static TrainConfig defaults_for(StopRule rule) {
        TrainConfig c;
        c.min_epochs = rule == StopRule::variance_plateau ? 120 : 20;
        return c;
    }
};

/// Per-epoch mean training losses, 1-indexed by epoch.
class LossHistory {
public:
    void append(double loss);
    double at(std::size_t epoch) const;  // 1-based
    std::size_t size() const { return losses_.size(); }
    const std::vector<double>& values() const { return losses_; }

private:
    std::vector<double> losses_;
};

/// Population variance (divide by 5) of the losses at epochs k-4..k.
double rolling_variance(const LossHistory& history, std::size_t k);

/// Terminal epoch under the variance-plateau rule: the smallest epoch
/// k >= min_epochs+1 whose rolling variance is <= the rolling variance of
/// every epoch in (k, k+patience].  nullopt while no such epoch is
/// confirmable from the history.
std::optional<std::size_t> stopping_criterion_variance(const LossHistory& history,
                                                       std::size_t min_epochs = 120,
                                                       std::size_t patience = 10);

/// Terminal epoch under the loss-minimum rule: the smallest epoch
/// k >= min_epochs whose loss is <= the loss of every epoch in
/// (k, k+patience].
std::optional<std::size_t> stopping_criterion_loss_min(const LossHistory& history,
                                                       std::size_t min_epochs = 20,
                                                       std::size_t patience = 10);

/// Mean squared error over a batch.
double mse(std::span<const double> preds, std::span<const double> targets);

/// MSE plus the weight-decay penalty lambda * sum of squared trainable
/// parameters.
template <typename T>
double mse_wd_loss(std::span<const double> preds, std::span<const double> targets,
                   const ParameterStore<T>& params, double lambda,
                   const FreezeMask* mask = nullptr) {
    return mse(preds, targets) + lambda * l2_squared(params, mask);
}

/// One training sample in model precision.
template <typename T>
struct TrainSample {
    Tensor<T> window;
    T target = 0;
};

template <typename T>
std::vector<TrainSample<T>> to_train_samples(std::span<const WindowSample> windows) {
    std::vector<TrainSample<T>> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        TrainSample<T> s;
        s.window = w.matrix.template cast<T>();
        s.target = T(w.target);
        out.push_back(std::move(s));
    }
    return out;
}

struct FitProgress {
    std::size_t epoch = 0;
    double loss = 0;
    std::optional<double> variance;  // defined from epoch 5 on
};

using EpochCallback = std::function<void(const FitProgress&)>;

/// One pass over the data: seeded shuffle, minibatches of batch_size (the
/// last batch may be short), one Adam step per batch.  Gradients accumulate
/// per sample in shuffled order, so the result is bit-reproducible for a
/// given rng state.  Returns the unweighted mean of the batch losses, each
/// computed against the parameters the batch was forwarded with.
template <typename T>
double train_epoch(ParameterStore<T>& params,
                   std::span<const TrainSample<T>> samples,
                   const TrainConfig& cfg, const ModelConfig& mcfg,
                   AdamState<T>& adam, Rng& rng,
                   const FreezeMask* mask = nullptr) {
    cfg.validate();
    if (samples.empty()) throw UsageError("train_epoch: no samples");
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::vector<std::string> trainables;
    for (const auto& [name, t] : params)
        if (!mask || !mask->is_frozen(name)) trainables.push_back(name);

    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
        const std::size_t end = std::min(begin + cfg.batch_size, order.size());
        const std::size_t bn = end - begin;

        std::map<std::string, Tensor<T>> grads;
        double sq_sum = 0;
        for (std::size_t k = begin; k < end; ++k) {
            const TrainSample<T>& s = samples[order[k]];
            Tape<T> tape;
            auto staged = stage_params(tape, params, mask);
            auto pred = model_forward(tape, staged, tape.constant(s.window), mcfg);
            auto diff = tape.sub(pred, tape.constant(Tensor<T>::scalar(s.target)));
            auto sq = tape.mul(diff, diff);
            sq_sum += double(tape.val(sq)(0));
            tape.backward(tape.scale(sq, T(1.0 / double(bn))));
            for (const auto& name : trainables) {
                Tensor<T> g = tape.grad(staged[name]);
                auto it = grads.find(name);
                if (it == grads.end())
                    grads.emplace(name, std::move(g));
                else
                    detail::add_into(it->second, g);
            }
        }
        const double batch_loss =
            sq_sum / double(bn) + cfg.lambda * l2_squared(params, mask);
        adam_step(params, grads, adam, cfg.eta, cfg.lambda);
        loss_sum += batch_loss;
        ++batches;
    }
    return loss_sum / double(batches);
}

template <typename T>
struct FitResult {
    ParameterStore<T> best_params;
    LossHistory history;
    /// Epoch whose parameters best_params holds; nullopt only when training
    /// hit max_epochs before any epoch became eligible for tracking.
    std::optional<std::size_t> terminal_epoch;
    /// True when the stop rule confirmed the terminal epoch; false when the
    /// max_epochs cap returned the best candidate so far.
    bool stopped_by_rule = false;
};

/// Train until the stop rule confirms a terminal epoch (or max_epochs).
/// Parameters are snapshotted whenever an eligible epoch sets a new minimum
/// of the tracked statistic (rolling variance / loss), so the returned store
/// is exactly the terminal epoch's parameters.
template <typename T>
FitResult<T> fit(ParameterStore<T> params, std::span<const TrainSample<T>> samples,
                 const TrainConfig& cfg, const ModelConfig& mcfg, StopRule rule,
                 const FreezeMask* mask = nullptr, const EpochCallback& cb = {}) {
    cfg.validate();
    Rng rng(cfg.seed);
    AdamState<T> adam;
    FitResult<T> res;

    ParameterStore<T> snapshot;
    std::optional<std::size_t> best_epoch;
    double best_stat = 0;

    const std::size_t first_eligible = rule == StopRule::variance_plateau
                                           ? std::max<std::size_t>(cfg.min_epochs + 1, 5)
                                           : cfg.min_epochs;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double loss =
            train_epoch(params, samples, cfg, mcfg, adam, rng, mask);
        res.history.append(loss);

        std::optional<double> variance;
        if (epoch >= 5) variance = rolling_variance(res.history, epoch);

        if (epoch >= first_eligible) {
            const double stat =
                rule == StopRule::variance_plateau ? *variance : loss;
            if (!best_epoch || stat < best_stat) {
                best_epoch = epoch;
                best_stat = stat;
                snapshot = params;
            }
        }

        if (cb) cb(FitProgress{epoch, loss, variance});

        const auto terminal =
            rule == StopRule::variance_plateau
                ? stopping_criterion_variance(res.history, cfg.min_epochs,
                                              cfg.patience)
                : stopping_criterion_loss_min(res.history, cfg.min_epochs,
                                              cfg.patience);
        if (terminal) {
            res.best_params = std::move(snapshot);
            res.terminal_epoch = terminal;
            res.stopped_by_rule = true;
            return res;
        }
    }

    // max_epochs reached: return the best candidate seen, or the final
    // parameters when no epoch ever became eligible.
    res.best_params = best_epoch ? std::move(snapshot) : std::move(params);
    res.terminal_epoch = best_epoch;
    res.stopped_by_rule = false;
    return res;
}

} // namespace rulkit
