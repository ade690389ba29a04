#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rulkit {

inline constexpr std::size_t kNumSettings = 3;
inline constexpr std::size_t kNumSensors = 21;

/// One engine operating cycle: 3 operational settings + 21 sensor readings.
struct CycleRecord {
    std::uint32_t cycle = 0;  // 1-based, consecutive within a unit
    std::array<double, kNumSettings> settings{};
    std::array<double, kNumSensors> sensors{};

    bool operator==(const CycleRecord&) const = default;
};

/// One engine's run from first cycle to (for training data) failure.
struct Trajectory {
    std::uint32_t unit_id = 0;
    std::vector<CycleRecord> records;

    std::size_t length() const { return records.size(); }
    bool operator==(const Trajectory&) const = default;
};

/// All units of one subset, in file order.
struct TrajectorySet {
    std::string subset_name;
    std::vector<Trajectory> trajectories;

    std::size_t unit_count() const { return trajectories.size(); }
    bool operator==(const TrajectorySet&) const = default;
};

/// Expected structure of one dataset subset.
struct SubsetSpec {
    std::string name;
    std::size_t train_units = 0;
    std::size_t test_units = 0;
    std::size_t conditions = 0;
    std::size_t fault_modes = 0;
};

/// Which unit count of a SubsetSpec a trajectory set is checked against.
enum class SubsetRole { train, test };

struct ValidationReport {
    std::string subset_name;
    SubsetRole role = SubsetRole::train;
    std::size_t units_found = 0;
    std::size_t units_expected = 0;
    bool unit_count_ok = false;
    bool all_finite = false;
    std::size_t conditions_found = 0;
    std::size_t conditions_expected = 0;
    bool condition_count_ok = false;
    std::string condition_note;  // set when detection itself failed

    bool pass() const { return unit_count_ok && all_finite && condition_count_ok; }
};

/// Parse whitespace-separated 26-column trajectory text (unit, cycle,
/// 3 settings, 21 sensors).  Units are grouped in first-appearance order;
/// cycle indices must start at 1 and increase by exactly 1 per unit.
TrajectorySet parse_trajectory_file(std::istream& in,
                                    const std::string& subset_name = "");

/// Parse a truth file: one non-negative integer RUL per line, in test-unit
/// file order.  Throws IntegrityError when the count disagrees.
std::vector<std::uint32_t> parse_rul_truth(std::istream& in,
                                           std::size_t expected_units);

/// Structural validation of a parsed set against its subset spec.  Never
/// throws; findings are carried as pass/fail flags in the report.
ValidationReport validate_subset(const TrajectorySet& set, const SubsetSpec& spec,
                                 SubsetRole role = SubsetRole::train);

/// Serialize back to 26-column text.  Values are written with shortest
/// round-trip formatting, so parse(write(set)) == set.
void write_trajectory_file(const TrajectorySet& set, std::ostream& out);

void write_rul_file(const std::vector<std::uint32_t>& ruls, std::ostream& out);

/// The four standard CMAPSS subset layouts, plus the bundled synthetic
/// presets.  Throws ConfigError for an unknown name.
SubsetSpec builtin_subset_spec(const std::string& name);
bool has_builtin_subset_spec(const std::string& name);

} // namespace rulkit
