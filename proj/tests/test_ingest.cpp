#include <doctest.h>

#include <sstream>

#include "rulkit/errors.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/synth.hpp"

using namespace rulkit;

namespace {

std::string line_of(std::uint32_t unit, std::uint32_t cycle,
                    const std::string& rest) {
    return std::to_string(unit) + " " + std::to_string(cycle) + " " + rest;
}

const std::string kZeros24 =
    "0.0 0.0 100.0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0";

} // namespace

TEST_CASE("parse a minimal valid file") {
    std::istringstream in(line_of(1, 1, kZeros24) + "\n");
    const auto set = parse_trajectory_file(in, "X");
    CHECK(set.unit_count() == 1);
    CHECK(set.trajectories[0].unit_id == 1);
    CHECK(set.trajectories[0].length() == 1);
    CHECK(set.trajectories[0].records[0].settings[2] == 100.0);
}

TEST_CASE("wrong field count names the line") {
    std::istringstream in(line_of(1, 1, kZeros24) + "\n1 2 0.0 0.0\n");
    try {
        parse_trajectory_file(in);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("26") != std::string::npos);
    }
}

TEST_CASE("non-numeric field is a format error") {
    std::istringstream in("1 1 abc 0.0 100.0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 "
                          "0 0 0 0\n");
    CHECK_THROWS_AS(parse_trajectory_file(in), FormatError);
}

TEST_CASE("broken cycle continuity is an integrity error") {
    std::istringstream in(line_of(1, 1, kZeros24) + "\n" +
                          line_of(1, 3, kZeros24) + "\n");
    CHECK_THROWS_AS(parse_trajectory_file(in), IntegrityError);
}

TEST_CASE("cycles must start at 1") {
    std::istringstream in(line_of(1, 2, kZeros24) + "\n");
    CHECK_THROWS_AS(parse_trajectory_file(in), IntegrityError);
}

TEST_CASE("interleaved units group by first appearance") {
    std::istringstream in(line_of(7, 1, kZeros24) + "\n" +
                          line_of(3, 1, kZeros24) + "\n" +
                          line_of(7, 2, kZeros24) + "\n");
    const auto set = parse_trajectory_file(in);
    REQUIRE(set.unit_count() == 2);
    CHECK(set.trajectories[0].unit_id == 7);
    CHECK(set.trajectories[0].length() == 2);
    CHECK(set.trajectories[1].unit_id == 3);
}

TEST_CASE("blank lines and trailing whitespace are tolerated") {
    std::istringstream in("\n" + line_of(1, 1, kZeros24) + "   \n\n");
    CHECK(parse_trajectory_file(in).unit_count() == 1);
}

TEST_CASE("truth file parsing") {
    SUBCASE("direct read") {
        std::istringstream in("112\n98\n");
        const auto v = parse_rul_truth(in, 2);
        REQUIRE(v.size() == 2);
        CHECK(v[0] == 112);
        CHECK(v[1] == 98);
    }
    SUBCASE("count mismatch") {
        std::istringstream in("1\n2\n3\n");
        CHECK_THROWS_AS(parse_rul_truth(in, 100), IntegrityError);
    }
    SUBCASE("negative value") {
        std::istringstream in("-5\n");
        CHECK_THROWS_AS(parse_rul_truth(in, 1), FormatError);
    }
    SUBCASE("non-integer value") {
        std::istringstream in("3.5\n");
        CHECK_THROWS_AS(parse_rul_truth(in, 1), FormatError);
    }
}

TEST_CASE("round-trip: write then parse is identity") {
    // Non-contiguous unit ids, negative values, exponents and long mantissas.
    Rng rng(99);
    TrajectorySet set;
    set.subset_name = "RT";
    for (std::uint32_t unit : {7u, 3u, 42u}) {
        Trajectory traj;
        traj.unit_id = unit;
        const std::size_t len = 1 + rng.index(9);
        for (std::uint32_t c = 1; c <= len; ++c) {
            CycleRecord rec;
            rec.cycle = c;
            for (auto& s : rec.settings) s = rng.uniform(-1e6, 1e6);
            for (auto& s : rec.sensors)
                s = rng.uniform(0, 1) < 0.2 ? rng.uniform(-1e-7, 1e-7)
                                            : rng.uniform(-1e4, 1e4);
            traj.records.push_back(rec);
        }
        set.trajectories.push_back(std::move(traj));
    }
    std::ostringstream out;
    write_trajectory_file(set, out);
    std::istringstream in(out.str());
    const auto parsed = parse_trajectory_file(in, "RT");
    CHECK(parsed == set);
}

TEST_CASE("truth round-trip") {
    const std::vector<std::uint32_t> truth{112, 98, 0, 120};
    std::ostringstream out;
    write_rul_file(truth, out);
    std::istringstream in(out.str());
    CHECK(parse_rul_truth(in, truth.size()) == truth);
}

TEST_CASE("validate_subset") {
    SUBCASE("empty set fails the unit count") {
        TrajectorySet empty;
        empty.subset_name = "E";
        const SubsetSpec spec{"E", 3, 3, 1, 1};
        const auto rep = validate_subset(empty, spec, SubsetRole::train);
        CHECK_FALSE(rep.unit_count_ok);
        CHECK_FALSE(rep.pass());
    }
    SUBCASE("a generated set validates against its own shape") {
        SynthSpec spec = SynthSpec::source();
        spec.n_units = 5;
        const auto gen = generate(spec);
        const SubsetSpec sub{"SRC", 5, 5, spec.n_conditions, 1};
        const auto rep = validate_subset(gen.train, sub, SubsetRole::train);
        CHECK(rep.unit_count_ok);
        CHECK(rep.all_finite);
        CHECK(rep.condition_count_ok);
        CHECK(rep.pass());
    }
    SUBCASE("six-regime synthetic set matches conditions = 6") {
        SynthSpec spec = SynthSpec::source();
        spec.n_conditions = 6;
        spec.condition_offsets = SynthSpec::default_offsets(6);
        spec.n_units = 6;
        const auto gen = generate(spec);
        const SubsetSpec sub{"S6", 6, 6, 6, 1};
        const auto rep = validate_subset(gen.train, sub, SubsetRole::train);
        CHECK(rep.conditions_found == 6);
        CHECK(rep.condition_count_ok);
    }
    SUBCASE("condition mismatch is reported, not thrown") {
        SynthSpec spec = SynthSpec::source();  // 2 regimes
        spec.n_units = 4;
        const auto gen = generate(spec);
        const SubsetSpec sub{"SRC", 4, 4, 6, 1};  // expects 6
        const auto rep = validate_subset(gen.train, sub, SubsetRole::train);
        CHECK_FALSE(rep.condition_count_ok);
        CHECK(rep.conditions_found == 2);
        CHECK_FALSE(rep.pass());
    }
}

TEST_CASE("builtin subset specs carry the dataset table") {
    const auto fd1 = builtin_subset_spec("FD001");
    CHECK(fd1.train_units == 100);
    CHECK(fd1.test_units == 100);
    CHECK(fd1.conditions == 1);
    CHECK(fd1.fault_modes == 1);
    const auto fd2 = builtin_subset_spec("FD002");
    CHECK(fd2.train_units == 260);
    CHECK(fd2.test_units == 259);
    CHECK(fd2.conditions == 6);
    const auto fd3 = builtin_subset_spec("FD003");
    CHECK(fd3.train_units == 100);
    CHECK(fd3.fault_modes == 2);
    const auto fd4 = builtin_subset_spec("FD004");
    CHECK(fd4.train_units == 249);
    CHECK(fd4.test_units == 248);
    CHECK(fd4.conditions == 6);
    CHECK(fd4.fault_modes == 2);
    CHECK_THROWS_AS(builtin_subset_spec("FD009"), ConfigError);
}
