#include <doctest.h>

#include <cmath>

#include "rulkit/errors.hpp"
#include "rulkit/preprocess.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/synth.hpp"
#include "test_support.hpp"

using namespace rulkit;

namespace {

Trajectory ramp_trajectory(std::uint32_t unit, std::size_t len,
                           double settings0 = 0.0) {
    Trajectory traj;
    traj.unit_id = unit;
    for (std::uint32_t c = 1; c <= len; ++c) {
        CycleRecord rec;
        rec.cycle = c;
        rec.settings = {settings0, 0.0, 100.0};
        for (std::size_t s = 0; s < kNumSensors; ++s)
            rec.sensors[s] = double(c) * (1.0 + double(s) * 0.1);
        traj.records.push_back(rec);
    }
    return traj;
}

} // namespace

TEST_CASE("RUL labels") {
    SUBCASE("end of life is zero") {
        const auto traj = ramp_trajectory(1, 5);
        const auto labels = assign_rul_labels(traj, 120);
        REQUIRE(labels.size() == 5);
        CHECK(labels.back() == 0.0);
    }
    SUBCASE("mid-life value follows the capped formula") {
        const auto traj = ramp_trajectory(1, 200);
        const auto labels = assign_rul_labels(traj, 120);
        // T=200, t=150: min(50,120)/120
        CHECK(labels[149] == doctest::Approx(50.0 / 120.0).epsilon(1e-15));
        // T=200, t=10: RUL 190 capped to 120 -> 1.0
        CHECK(labels[9] == 1.0);
    }
    SUBCASE("all labels lie in [0,1] and the final label is 0") {
        Rng rng(12);
        for (int trial = 0; trial < 10; ++trial) {
            const auto traj = ramp_trajectory(1, 1 + rng.index(300));
            const auto labels = assign_rul_labels(traj, 120);
            for (double v : labels) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            CHECK(labels.back() == 0.0);
        }
    }
}

TEST_CASE("condition detection") {
    SUBCASE("single regime maps everything to id 0") {
        TrajectorySet set;
        set.trajectories.push_back(ramp_trajectory(1, 4));
        set.trajectories.push_back(ramp_trajectory(2, 3));
        const auto det = detect_conditions(set, 1);
        CHECK(det.group_count == 1);
        for (const auto& unit : det.ids)
            for (int id : unit) CHECK(id == 0);
    }
    SUBCASE("six jittered regimes stay six groups") {
        SynthSpec spec = SynthSpec::source();
        spec.n_conditions = 6;
        spec.condition_offsets = SynthSpec::default_offsets(6);
        spec.n_units = 8;
        const auto gen = generate(spec);

        // independent count of unique quantized triples
        std::set<std::array<long long, 3>> uniq;
        for (const auto& traj : gen.train.trajectories)
            for (const auto& rec : traj.records) {
                std::array<long long, 3> k{};
                for (int i = 0; i < 3; ++i)
                    k[i] = llround(rec.settings[i] * 10.0);
                uniq.insert(k);
            }
        CHECK(uniq.size() == 6);
        CHECK(detect_conditions(gen.train, 6).group_count == 6);
    }
    SUBCASE("expectation mismatch raises") {
        TrajectorySet set;
        set.trajectories.push_back(ramp_trajectory(1, 4));
        CHECK_THROWS_AS(detect_conditions(set, 6), IntegrityError);
    }
    SUBCASE("ids are stable under the fitted map, unseen triples rejected") {
        TrajectorySet set;
        set.trajectories.push_back(ramp_trajectory(1, 3, 0.0));
        set.trajectories.push_back(ramp_trajectory(2, 3, 5.0));
        const auto det = detect_conditions(set, 2);
        CHECK(det.ids[0][0] == 0);
        CHECK(det.ids[1][0] == 1);
        auto alien = ramp_trajectory(3, 1, 99.0);
        CHECK_THROWS_AS(det.map.id_of(alien.records[0]), IntegrityError);
    }
}

TEST_CASE("group min-max fitting") {
    SUBCASE("simple channel") {
        TrajectorySet set;
        Trajectory traj;
        traj.unit_id = 1;
        for (std::uint32_t c = 1; c <= 3; ++c) {
            CycleRecord rec;
            rec.cycle = c;
            rec.settings = {0, 0, 0};
            for (auto& s : rec.sensors) s = double(2 * c);  // 2, 4, 6
            traj.records.push_back(rec);
        }
        set.trajectories.push_back(traj);
        const auto det = detect_conditions(set, 1);
        const auto stats = fit_group_minmax(set, det.ids, det.group_count);
        CHECK(stats.at(0, 0).min == 2.0);
        CHECK(stats.at(0, 0).max == 6.0);
    }
    SUBCASE("constant channel degenerates to min == max") {
        TrajectorySet set;
        Trajectory traj;
        traj.unit_id = 1;
        for (std::uint32_t c = 1; c <= 3; ++c) {
            CycleRecord rec;
            rec.cycle = c;
            rec.settings = {0, 0, 0};
            for (auto& s : rec.sensors) s = 5.0;
            traj.records.push_back(rec);
        }
        set.trajectories.push_back(traj);
        const auto det = detect_conditions(set, 1);
        const auto stats = fit_group_minmax(set, det.ids, det.group_count);
        CHECK(stats.at(0, 3).min == 5.0);
        CHECK(stats.at(0, 3).max == 5.0);
    }
    SUBCASE("two regimes get independent stats (brute-force oracle)") {
        TrajectorySet set;
        set.trajectories.push_back(ramp_trajectory(1, 6, 0.0));
        set.trajectories.push_back(ramp_trajectory(2, 9, 5.0));
        // shift regime 1's sensors into a disjoint range
        for (auto& rec : set.trajectories[1].records)
            for (auto& s : rec.sensors) s += 1000.0;
        const auto det = detect_conditions(set, 2);
        const auto stats = fit_group_minmax(set, det.ids, det.group_count);

        for (std::size_t s = 0; s < kNumSensors; ++s) {
            double mn0 = 1e300, mx0 = -1e300, mn1 = 1e300, mx1 = -1e300;
            for (const auto& rec : set.trajectories[0].records) {
                mn0 = std::min(mn0, rec.sensors[s]);
                mx0 = std::max(mx0, rec.sensors[s]);
            }
            for (const auto& rec : set.trajectories[1].records) {
                mn1 = std::min(mn1, rec.sensors[s]);
                mx1 = std::max(mx1, rec.sensors[s]);
            }
            CHECK(stats.at(0, s).min == mn0);
            CHECK(stats.at(0, s).max == mx0);
            CHECK(stats.at(1, s).min == mn1);
            CHECK(stats.at(1, s).max == mx1);
        }
    }
}

TEST_CASE("min-max application") {
    CHECK(apply_minmax(4.0, {2.0, 6.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(apply_minmax(123.0, {5.0, 5.0}) == 0.0);  // constant channel
    CHECK(apply_minmax(8.0, {2.0, 6.0}) ==
          doctest::Approx(1.5).epsilon(1e-15));  // no clipping
}

TEST_CASE("exponential smoothing") {
    SUBCASE("alpha = 1 is the identity") {
        const std::vector<double> in{3.0, -1.0, 7.5, 0.0};
        CHECK(exp_smooth(in, 1.0) == in);
    }
    SUBCASE("hand recursions") {
        const auto a = exp_smooth({0.0, 2.0}, 0.5);
        CHECK(a == std::vector<double>{0.0, 1.0});
        const auto b = exp_smooth({0.0, 2.0, 2.0}, 0.5);
        REQUIRE(b.size() == 3);
        CHECK(b[0] == 0.0);
        CHECK(b[1] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(b[2] == doctest::Approx(1.5).epsilon(1e-15));
    }
    SUBCASE("constant series is a fixed point for any alpha") {
        Rng rng(3);
        for (int trial = 0; trial < 5; ++trial) {
            const double c = rng.uniform(-10, 10);
            const std::vector<double> in(7, c);
            const auto out = exp_smooth(in, rng.uniform(0, 1));
            for (double v : out) CHECK(v == doctest::Approx(c).epsilon(1e-12));
        }
    }
    SUBCASE("edge cases") {
        CHECK_THROWS_AS(exp_smooth({}, 0.5), UsageError);
        CHECK_THROWS_AS(exp_smooth({1.0}, 1.5), ConfigError);
    }
}

TEST_CASE("window construction") {
    auto features_of = [](std::size_t n) {
        TensorD f = TensorD::zeros({n, kNumSensors});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < kNumSensors; ++s)
                f(i, s) = double(i + 1) + double(s) * 0.01;
        return f;
    };
    auto labels_of = [](std::size_t n) {
        std::vector<double> l(n);
        for (std::size_t i = 0; i < n; ++i) l[i] = double(n - 1 - i) / double(n);
        return l;
    };

    SUBCASE("length 5 with L=3 gives windows ending at 3,4,5") {
        const auto w = make_windows(features_of(5), labels_of(5), 9, 3, 1);
        REQUIRE(w.size() == 3);
        CHECK(w[0].end_cycle == 3);
        CHECK(w[1].end_cycle == 4);
        CHECK(w[2].end_cycle == 5);
        CHECK(w[0].unit_id == 9);
        CHECK(w[0].matrix(0, 0) == 1.0);  // rows 1..3
        CHECK(w[2].matrix(2, 0) == 5.0);
        CHECK(w[1].target == labels_of(5)[3]);
    }
    SUBCASE("length L gives exactly one window") {
        const auto w = make_windows(features_of(4), labels_of(4), 1, 4, 1);
        CHECK(w.size() == 1);
    }
    SUBCASE("stride 2 skips ends") {
        const auto w = make_windows(features_of(8), labels_of(8), 1, 3, 2);
        REQUIRE(w.size() == 3);
        CHECK(w[0].end_cycle == 3);
        CHECK(w[1].end_cycle == 5);
        CHECK(w[2].end_cycle == 7);
    }
    SUBCASE("short trajectory pads by replicating the first row") {
        const auto w = make_windows(features_of(2), labels_of(2), 1, 4, 1);
        REQUIRE(w.size() == 1);
        CHECK(w[0].end_cycle == 2);
        CHECK(w[0].matrix(0, 0) == 1.0);
        CHECK(w[0].matrix(1, 0) == 1.0);
        CHECK(w[0].matrix(2, 0) == 1.0);
        CHECK(w[0].matrix(3, 0) == 2.0);
    }
    SUBCASE("window count is N - L + 1 at stride 1") {
        Rng rng(8);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t L = 1 + rng.index(10);
            const std::size_t n = L + rng.index(30);
            const auto w = make_windows(features_of(n), labels_of(n), 1, L, 1);
            CHECK(w.size() == n - L + 1);
        }
    }
    SUBCASE("last_window slices the tail") {
        const auto w = last_window(features_of(45), 5, 30);
        CHECK(w.end_cycle == 45);
        CHECK(w.matrix(0, 0) == 16.0);   // rows 16..45, 1-based
        CHECK(w.matrix(29, 0) == 45.0);
    }
    SUBCASE("last_window of an exact-length trajectory is the whole thing") {
        const auto w = last_window(features_of(30), 5, 30);
        CHECK(w.matrix(0, 0) == 1.0);
        CHECK(w.matrix(29, 0) == 30.0);
    }
    SUBCASE("last_window pads a short trajectory with 21 lead replicas") {
        const auto w = last_window(features_of(10), 5, 30);
        // pad = 20 replicas + the real first row = 21 identical lead rows
        for (std::size_t r = 0; r <= 20; ++r) CHECK(w.matrix(r, 0) == 1.0);
        CHECK(w.matrix(21, 0) == 2.0);
        CHECK(w.matrix(29, 0) == 10.0);
    }
}

TEST_CASE("training-set normalized values lie in [0,1]") {
    SynthSpec spec = SynthSpec::source();
    spec.n_units = 4;
    const auto gen = generate(spec);
    PipelineConfig cfg;
    cfg.expected_conditions = spec.n_conditions;
    cfg.window_len = 20;
    const auto pipe = fit_pipeline(gen.train, cfg);
    const auto windows = transform_training_set(pipe, gen.train);
    CHECK(windows.size() > 0);
    for (const auto& w : windows)
        for (double v : w.matrix.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("full pipeline matches the straight-line reference to 1e-12") {
    Rng rng(2024);
    for (int trial = 0; trial < 3; ++trial) {
        SynthSpec spec = SynthSpec::source();
        spec.seed = 1000 + std::uint64_t(trial);
        spec.n_units = 6;
        spec.mean_life = 40;
        spec.life_jitter = 8;
        spec.n_conditions = 1 + trial;
        spec.condition_offsets = SynthSpec::default_offsets(spec.n_conditions);
        const auto gen = generate(spec);
        for (const auto& traj : gen.train.trajectories)
            REQUIRE(traj.length() <= 50);

        PipelineConfig cfg;
        cfg.alpha = 0.3;
        cfg.window_len = trial == 0 ? 30 : 12;
        cfg.stride = trial == 2 ? 2 : 1;
        cfg.expected_conditions = spec.n_conditions;
        CHECK(testsup::pipeline_vs_reference(gen.train, cfg) < 1e-12);
    }
}

TEST_CASE("test transform uses training statistics and may leave [0,1]") {
    // train on a narrow range, transform a wider test unit
    TrajectorySet train;
    train.trajectories.push_back(ramp_trajectory(1, 10));
    PipelineConfig cfg;
    cfg.window_len = 4;
    cfg.alpha = 1.0;
    cfg.expected_conditions = 1;
    const auto pipe = fit_pipeline(train, cfg);

    TrajectorySet test;
    auto t = ramp_trajectory(1, 12);  // values beyond the training max
    test.trajectories.push_back(t);
    const auto windows = transform_test_last_windows(pipe, test);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].end_cycle == 12);
    bool above = false;
    for (double v : windows[0].matrix.data()) above = above || v > 1.0;
    CHECK(above);
}
