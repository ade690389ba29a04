#include "rulkit/ingest.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "rulkit/errors.hpp"
#include "rulkit/preprocess.hpp"

namespace rulkit {

namespace {

constexpr std::size_t kColumns = 2 + kNumSettings + kNumSensors;  // 26

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

double parse_number(std::string_view field, std::size_t line_no) {
    double v = 0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        throw FormatError("line " + std::to_string(line_no) +
                          ": non-numeric field '" + std::string(field) + "'");
    if (!std::isfinite(v))
        throw FormatError("line " + std::to_string(line_no) +
                          ": non-finite value '" + std::string(field) + "'");
    return v;
}

void write_double(std::ostream& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
}

} // namespace

TrajectorySet parse_trajectory_file(std::istream& in,
                                    const std::string& subset_name) {
    TrajectorySet set;
    set.subset_name = subset_name;
    std::unordered_map<std::uint32_t, std::size_t> index_of;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;  // blank line tolerated
        if (fields.size() != kColumns)
            throw FormatError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(kColumns) + " fields, got " +
                              std::to_string(fields.size()));
        const double unit_raw = parse_number(fields[0], line_no);
        const double cycle_raw = parse_number(fields[1], line_no);
        if (unit_raw <= 0 || unit_raw != std::floor(unit_raw))
            throw FormatError("line " + std::to_string(line_no) +
                              ": unit id must be a positive integer");
        if (cycle_raw <= 0 || cycle_raw != std::floor(cycle_raw))
            throw FormatError("line " + std::to_string(line_no) +
                              ": cycle must be a positive integer");
        const auto unit = static_cast<std::uint32_t>(unit_raw);
        const auto cycle = static_cast<std::uint32_t>(cycle_raw);

        CycleRecord rec;
        rec.cycle = cycle;
        for (std::size_t i = 0; i < kNumSettings; ++i)
            rec.settings[i] = parse_number(fields[2 + i], line_no);
        for (std::size_t i = 0; i < kNumSensors; ++i)
            rec.sensors[i] = parse_number(fields[2 + kNumSettings + i], line_no);

        auto it = index_of.find(unit);
        if (it == index_of.end()) {
            index_of.emplace(unit, set.trajectories.size());
            Trajectory traj;
            traj.unit_id = unit;
            set.trajectories.push_back(std::move(traj));
            it = index_of.find(unit);
        }
        Trajectory& traj = set.trajectories[it->second];
        const std::uint32_t expected = static_cast<std::uint32_t>(traj.length()) + 1;
        if (cycle != expected)
            throw IntegrityError("line " + std::to_string(line_no) + ": unit " +
                                 std::to_string(unit) + " expected cycle " +
                                 std::to_string(expected) + ", got " +
                                 std::to_string(cycle));
        traj.records.push_back(rec);
    }
    return set;
}

std::vector<std::uint32_t> parse_rul_truth(std::istream& in,
                                           std::size_t expected_units) {
    std::vector<std::uint32_t> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 1)
            throw FormatError("line " + std::to_string(line_no) +
                              ": expected one value per line");
        const double v = parse_number(fields[0], line_no);
        if (v < 0)
            throw FormatError("line " + std::to_string(line_no) +
                              ": RUL must be non-negative");
        if (v != std::floor(v))
            throw FormatError("line " + std::to_string(line_no) +
                              ": RUL must be an integer");
        out.push_back(static_cast<std::uint32_t>(v));
    }
    if (out.size() != expected_units)
        throw IntegrityError("truth file has " + std::to_string(out.size()) +
                             " values, expected " +
                             std::to_string(expected_units));
    return out;
}

ValidationReport validate_subset(const TrajectorySet& set, const SubsetSpec& spec,
                                 SubsetRole role) {
    ValidationReport rep;
    rep.subset_name = set.subset_name.empty() ? spec.name : set.subset_name;
    rep.role = role;
    rep.units_found = set.unit_count();
    rep.units_expected =
        role == SubsetRole::train ? spec.train_units : spec.test_units;
    rep.unit_count_ok = rep.units_found == rep.units_expected;

    rep.all_finite = true;
    for (const auto& traj : set.trajectories) {
        for (const auto& rec : traj.records) {
            for (double v : rec.settings)
                if (!std::isfinite(v)) rep.all_finite = false;
            for (double v : rec.sensors)
                if (!std::isfinite(v)) rep.all_finite = false;
        }
    }

    rep.conditions_expected = spec.conditions;
    try {
        const auto detected = detect_conditions(set, spec.conditions);
        rep.conditions_found = detected.group_count;
        rep.condition_count_ok = true;
    } catch (const IntegrityError& e) {
        // detect_conditions reports the count it found in the error; re-derive
        // it without the expectation to fill the report.
        rep.condition_note = e.what();
        try {
            rep.conditions_found = count_conditions(set);
        } catch (...) {
            rep.conditions_found = 0;
        }
        rep.condition_count_ok = false;
    }
    return rep;
}

void write_trajectory_file(const TrajectorySet& set, std::ostream& out) {
    for (const auto& traj : set.trajectories) {
        for (const auto& rec : traj.records) {
            out << traj.unit_id << ' ' << rec.cycle;
            for (double v : rec.settings) {
                out << ' ';
                write_double(out, v);
            }
            for (double v : rec.sensors) {
                out << ' ';
                write_double(out, v);
            }
            out << '\n';
        }
    }
}

void write_rul_file(const std::vector<std::uint32_t>& ruls, std::ostream& out) {
    for (auto v : ruls) out << v << '\n';
}

namespace {

const std::map<std::string, SubsetSpec>& builtin_specs() {
    static const std::map<std::string, SubsetSpec> specs = {
        {"FD001", {"FD001", 100, 100, 1, 1}},
        {"FD002", {"FD002", 260, 259, 6, 1}},
        {"FD003", {"FD003", 100, 100, 1, 2}},
        {"FD004", {"FD004", 249, 248, 6, 2}},
        // Synthetic presets; see synth.hpp.
        {"SRC", {"SRC", 12, 12, 2, 1}},
        {"TGT", {"TGT", 12, 12, 3, 1}},
    };
    return specs;
}

} // namespace

SubsetSpec builtin_subset_spec(const std::string& name) {
    auto it = builtin_specs().find(name);
    if (it == builtin_specs().end())
        throw ConfigError("unknown subset: " + name);
    return it->second;
}

bool has_builtin_subset_spec(const std::string& name) {
    return builtin_specs().count(name) != 0;
}

} // namespace rulkit
