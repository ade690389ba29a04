#pragma once

#include <filesystem>
#include <iosfwd>

#include "rulkit/experiment.hpp"
#include "rulkit/synth.hpp"

namespace rulkit {

/// Parse + validate a subset (train, test and truth files) against its
/// builtin spec.  Prints one report line per check; returns overall pass.
bool cmd_validate(const ExperimentConfig& cfg, std::ostream& log);

/// Generate a synthetic dataset and write train_/test_/RUL_ files.
void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir,
               std::ostream& log);

/// Full pipeline -> training with the variance-plateau stop rule ->
/// evaluation on the subset's test split.  Writes checkpoint.bin, loss.tsv
/// and appends one metrics row.
void cmd_train(const ExperimentConfig& cfg, std::ostream& log);

/// Freeze-and-fine-tune from a source checkpoint on the configured target
/// subset, once per requested data fraction, with the loss-minimum stop
/// rule.  Writes one checkpoint and loss log per fraction and appends one
/// metrics row per fraction.
void cmd_finetune(const ExperimentConfig& cfg, std::ostream& log);

/// Evaluate an existing checkpoint on a subset's test split.
void cmd_evaluate(const ExperimentConfig& cfg,
                  const std::filesystem::path& checkpoint_path,
                  std::ostream& log);

} // namespace rulkit
