#pragma once

#include <span>

#include "rulkit/ingest.hpp"
#include "rulkit/model.hpp"
#include "rulkit/param_store.hpp"
#include "rulkit/train.hpp"

namespace rulkit {

/// Freeze mask for fine-tuning: backbone layers 0..n_frozen-1 frozen along
/// with the embedding and positional tensors; the remaining layers, the
/// pooling vector (unless pool_trainable is false) and the regression head
/// stay trainable.  Covers every parameter name exactly once.
FreezeMask build_freeze_mask(const ModelConfig& cfg, std::size_t n_frozen,
                             bool pool_trainable = true);

/// Number of trainable tensors under build_freeze_mask, computed from the
/// configuration alone (16 tensors per unfrozen layer + pooling + 6 head
/// tensors).
std::size_t expected_trainable_tensors(const ModelConfig& cfg,
                                       std::size_t n_frozen,
                                       bool pool_trainable = true);

/// The first ceil(p * unit_count) trajectories in file order, 0 < p <= 1.
TrajectorySet select_fraction(const TrajectorySet& set, double p);

/// Fine-tune a source-trained parameter store on target-domain samples with
/// the loss-minimum stop rule.  Frozen parameters never receive gradients or
/// optimizer state, so they come back bit-identical.
template <typename T>
FitResult<T> finetune(const ParameterStore<T>& source_params,
                      const ModelConfig& mcfg,
                      std::span<const TrainSample<T>> target_samples,
                      const FreezeMask& mask, const TrainConfig& cfg,
                      const EpochCallback& cb = {}) {
    if (!mask.covers(source_params.names()))
        throw ConfigError(
            "freeze mask does not match the checkpoint's parameter set");
    return fit(source_params, target_samples, cfg, mcfg,
               StopRule::loss_minimum, &mask, cb);
}

} // namespace rulkit
