#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rulkit/ingest.hpp"

namespace rulkit {

enum class DegradationShape { linear, exponential };

/// Additive shifts that define one operating-condition regime.  Regime
/// setting triples sit at least 1.0 apart per coordinate (10x the condition
/// quantization step), and per-cycle setting jitter stays below 0.05, so
/// grouping can never merge or split regimes.
struct ConditionOffset {
    std::array<double, kNumSettings> settings{};
    std::array<double, kNumSensors> sensors{};
};

/// Recipe for a deterministic CMAPSS-format degradation dataset.
struct SynthSpec {
    std::uint64_t seed = 1;
    std::size_t n_units = 12;  // per split; the test split gets its own units
    std::size_t n_conditions = 1;
    std::uint32_t mean_life = 100;
    std::uint32_t life_jitter = 20;
    std::array<double, kNumSensors> noise_std{};
    std::vector<ConditionOffset> condition_offsets;  // one per condition
    DegradationShape shape = DegradationShape::linear;
    std::string name = "SYN";

    void validate() const;

    /// Widely separated regime offsets for k conditions.
    static std::vector<ConditionOffset> default_offsets(std::size_t k);

    /// Built-in presets standing in for a transfer pair: different condition
    /// counts and degradation shapes.  Their unit counts match the SRC/TGT
    /// builtin subset specs.
    static SynthSpec source();
    static SynthSpec target();
};

struct GenResult {
    TrajectorySet train;
    TrajectorySet test;
    std::vector<std::uint32_t> truth;            // remaining cycles per test unit
    std::vector<std::uint32_t> test_full_lives;  // before truncation
};

/// Generate train/test trajectory sets plus the test truth.  Sensors follow
/// a monotone degradation trend plus condition offset plus Gaussian noise;
/// each cycle's condition is drawn from the regime set; test units are
/// truncated at a seeded point with at least 5 cycles remaining.  Fully
/// deterministic per seed, with independent per-unit streams.
GenResult generate(const SynthSpec& spec);

} // namespace rulkit
