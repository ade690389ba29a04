#include "rulkit/synth.hpp"

#include <algorithm>
#include <cmath>

#include "rulkit/errors.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

namespace {

constexpr double kSettingJitter = 0.04;

double sensor_base(std::size_t j) { return 20.0 + 5.0 * double(j); }

// Degradation amplitude per sensor; the last channel is deliberately flat so
// the constant-channel normalization convention gets exercised end to end.
double sensor_amplitude(std::size_t j) {
    if (j == kNumSensors - 1) return 0.0;
    return 8.0 + 0.4 * double(j);
}

double trend(DegradationShape shape, double t, double life) {
    const double x = t / life;
    if (shape == DegradationShape::linear) return x;
    return std::expm1(3.0 * x) / std::expm1(3.0);
}

Trajectory generate_unit(const SynthSpec& spec, std::uint32_t unit_id,
                         std::uint64_t stream, std::uint32_t& life_out) {
    Rng rng(Rng::derive(spec.seed, stream));
    const long jitter =
        spec.life_jitter == 0
            ? 0
            : long(rng.index(2 * std::uint64_t(spec.life_jitter) + 1)) -
                  long(spec.life_jitter);
    const auto life = std::uint32_t(std::max<long>(10, long(spec.mean_life) + jitter));
    life_out = life;

    Trajectory traj;
    traj.unit_id = unit_id;
    traj.records.reserve(life);
    for (std::uint32_t t = 1; t <= life; ++t) {
        const auto c = std::size_t(rng.index(spec.n_conditions));
        const ConditionOffset& off = spec.condition_offsets[c];
        CycleRecord rec;
        rec.cycle = t;
        for (std::size_t i = 0; i < kNumSettings; ++i)
            rec.settings[i] = off.settings[i] +
                              rng.uniform(-kSettingJitter, kSettingJitter);
        const double progress = trend(spec.shape, double(t), double(life));
        for (std::size_t j = 0; j < kNumSensors; ++j) {
            double v = sensor_base(j) + off.sensors[j] +
                       sensor_amplitude(j) * progress;
            if (spec.noise_std[j] > 0.0) v += rng.normal(0.0, spec.noise_std[j]);
            rec.sensors[j] = v;
        }
        traj.records.push_back(rec);
    }
    return traj;
}

} // namespace

void SynthSpec::validate() const {
    if (n_units < 1) throw ConfigError("synth: n_units must be >= 1");
    if (n_conditions < 1 || n_conditions > 6)
        throw ConfigError("synth: n_conditions must lie in [1, 6]");
    if (condition_offsets.size() != n_conditions)
        throw ConfigError("synth: need one condition offset per condition");
    if (mean_life <= life_jitter + 10)
        throw ConfigError("synth: mean_life too small for the requested jitter");
    for (double s : noise_std)
        if (s < 0) throw ConfigError("synth: noise_std must be non-negative");
}

std::vector<ConditionOffset> SynthSpec::default_offsets(std::size_t k) {
    std::vector<ConditionOffset> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        out[c].settings = {6.0 * double(c), 3.0 * double(c) + 1.0,
                           100.0 - 5.0 * double(c)};
        for (std::size_t j = 0; j < kNumSensors; ++j)
            out[c].sensors[j] = double(c) * (2.0 + 0.3 * double(j));
    }
    return out;
}

SynthSpec SynthSpec::source() {
    SynthSpec s;
    s.seed = 101;
    s.n_units = 12;
    s.n_conditions = 2;
    s.mean_life = 100;
    s.life_jitter = 20;
    s.shape = DegradationShape::linear;
    s.name = "SRC";
    s.condition_offsets = default_offsets(s.n_conditions);
    for (std::size_t j = 0; j < kNumSensors; ++j)
        s.noise_std[j] = 0.15 + 0.01 * double(j);
    s.noise_std[kNumSensors - 1] = 0.0;  // keep the flat channel exactly flat
    return s;
}

SynthSpec SynthSpec::target() {
    SynthSpec s = source();
    s.seed = 202;
    s.n_conditions = 3;
    s.mean_life = 90;
    s.life_jitter = 15;
    s.shape = DegradationShape::exponential;
    s.name = "TGT";
    s.condition_offsets = default_offsets(s.n_conditions);
    return s;
}

GenResult generate(const SynthSpec& spec) {
    spec.validate();
    GenResult out;
    out.train.subset_name = spec.name;
    out.test.subset_name = spec.name;

    for (std::size_t u = 0; u < spec.n_units; ++u) {
        std::uint32_t life = 0;
        out.train.trajectories.push_back(
            generate_unit(spec, std::uint32_t(u + 1), u, life));
    }

    constexpr std::uint64_t kTestStreamBase = 1'000'000;
    for (std::size_t u = 0; u < spec.n_units; ++u) {
        std::uint32_t life = 0;
        Trajectory traj = generate_unit(spec, std::uint32_t(u + 1),
                                        kTestStreamBase + u, life);
        Rng rng(Rng::derive(spec.seed, 2 * kTestStreamBase + u));
        const std::uint32_t r_max = std::max<std::uint32_t>(5, life / 2);
        const auto remaining =
            std::uint32_t(5 + rng.index(std::uint64_t(r_max) - 5 + 1));
        traj.records.resize(life - remaining);
        out.test.trajectories.push_back(std::move(traj));
        out.truth.push_back(remaining);
        out.test_full_lives.push_back(life);
    }
    return out;
}

} // namespace rulkit
