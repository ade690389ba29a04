#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rulkit/model.hpp"
#include "rulkit/preprocess.hpp"
#include "rulkit/train.hpp"

namespace rulkit {

/// Everything one command run needs: model/pipeline/training settings plus
/// data locations and transfer options.  Built from an optional key=value
/// config file with command-line overrides applied on top.
struct ExperimentConfig {
    ModelConfig model;
    PipelineConfig pipeline;
    TrainConfig train;

    std::string data_dir;  // empty -> $RULKIT_DATA_DIR, then "data"
    std::string subset = "SRC";
    std::string out_dir = "out";

    std::string source_checkpoint;  // finetune: weights to start from
    std::string init_checkpoint;    // train: optional warm-start import
    std::size_t n_frozen = 20;
    std::vector<double> fractions = {1.0};  // target-data fractions to sweep
    bool emit_plots = false;
    std::string dump_windows;           // optional preprocessed-window dump
    std::string dump_format = "text";   // text | binary

    void validate() const;

    std::filesystem::path resolved_data_dir() const;
    std::filesystem::path train_file() const;
    std::filesystem::path test_file() const;
    std::filesystem::path truth_file() const;
};

/// Apply one `key = value` setting.  Unknown keys throw ConfigError.
void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                     const std::string& value);

/// Parse a config file of `key = value` lines ('#' starts a comment).
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

/// Shortest round-trip decimal formatting, used for every number the CLI
/// writes so reruns produce identical files.
std::string format_double(double v);

} // namespace rulkit
