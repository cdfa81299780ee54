#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace varenn {

/// The eight CRU-style climatic variables, in canonical (alphabetical) order.
enum class VariableId : std::uint8_t { cld = 0, dtr, frs, pet, pre, tmp, vap, wet };

inline constexpr std::size_t kVariableCount = 8;

struct VariableInfo {
    VariableId id;
    std::string_view code;
    std::string_view name;
    std::string_view units;
};

const std::array<VariableInfo, kVariableCount>& variable_catalog();

constexpr int canonical_index(VariableId v) { return static_cast<int>(v); }
VariableId variable_from_index(int index);
std::string_view code_of(VariableId v);
std::string_view units_of(VariableId v);
/// Parses a three-letter code ("tmp"); throws ValidationError on unknown codes.
VariableId parse_variable(std::string_view code);
/// Parses "pet,tmp,vap" into a list in the given order.
std::vector<VariableId> parse_variable_list(std::string_view csv);
std::string join_codes(std::span<const VariableId> vars, char sep = ',');

struct GridCell {
    std::int64_t cell_id = 0;
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const GridCell&, const GridCell&) = default;
};

inline constexpr float kMissing = std::numeric_limits<float>::quiet_NaN();
inline bool is_missing(float v) { return std::isnan(v); }

/// Monthly gridded data, values laid out [variable][month][cell].
/// Immutable once constructed; validate() is run by the constructor.
class ClimateCube {
public:
    ClimateCube() = default;
    ClimateCube(std::vector<VariableId> variables, int n_months, int start_year,
                std::vector<GridCell> grid, std::vector<float> values);

    const std::vector<VariableId>& variables() const { return variables_; }
    int n_months() const { return n_months_; }
    int n_years() const { return n_months_ / 12; }
    int start_year() const { return start_year_; }
    const std::vector<GridCell>& grid() const { return grid_; }
    std::size_t n_cells() const { return grid_.size(); }
    std::span<const float> values() const { return values_; }

    /// Slot of a variable in this cube, if present.
    std::optional<std::size_t> slot_of(VariableId v) const;
    bool has(VariableId v) const { return slot_of(v).has_value(); }
    /// Slot of a variable; throws ValidationError if the cube lacks it.
    std::size_t require_slot(VariableId v) const;

    float at(std::size_t slot, int month, std::size_t cell) const {
        return values_[(slot * static_cast<std::size_t>(n_months_) + static_cast<std::size_t>(month)) *
                           grid_.size() +
                       cell];
    }

    std::optional<std::size_t> cell_index(std::int64_t cell_id) const;

    friend bool operator==(const ClimateCube& a, const ClimateCube& b);

private:
    void validate() const;

    std::vector<VariableId> variables_;
    int n_months_ = 0;
    int start_year_ = 0;
    std::vector<GridCell> grid_;
    std::vector<float> values_;
};

/// Reads a VCUBE1 file. Throws FormatError, LengthError, ValidationError or IoError.
ClimateCube load_cube(const std::filesystem::path& path);
/// Writes a VCUBE1 file. Output bytes depend only on the cube contents.
void save_cube(const ClimateCube& cube, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_cube(const ClimateCube& cube);
ClimateCube decode_cube(std::span<const std::uint8_t> bytes);

struct ValueRange {
    double min = 0.0;
    double max = 0.0;
};

/// Per-variable (min, max), indexed by canonical index; absent variables are empty.
struct ScalingStats {
    std::array<std::optional<ValueRange>, kVariableCount> ranges{};

    const ValueRange& of(VariableId v) const;
    void set(VariableId v, ValueRange r) { ranges[static_cast<std::size_t>(v)] = r; }
};

/// Min/max over all non-missing entries of every variable in the cube.
/// Throws StatisticsError naming a variable that is entirely missing.
ScalingStats global_minmax(const ClimateCube& cube);

// ---------------------------------------------------------------------------
// Synthetic climate generator.
//
// For cell c of variable v, year y (0-based) and month m (0 = January):
//
//   value = base_c + amplitude_c * cos(2*pi*(m - phase_c)/12) + trend_c * y + e
//
// with e an AR(1) series over the months, stationary sd noise_sd:
//   e_0 = noise_sd * z_0,  e_t = ar1 * e_{t-1} + sqrt(1 - ar1^2) * noise_sd * z_t.
//
// Per-cell parameters:
//   base_c      = base + base_spread * U(-1, 1)
//   amplitude_c = seasonal_amplitude + amplitude_spread * U(-1, 1)
//   phase_c     = seasonal_phase + phase_spread * U(0, 1)
//   trend_c     = level + trend_spread * U(-1, 1)
//                 + trend_phase_coupling * cos(2*pi*(phase_c - seasonal_phase)/12)
// where level is trend_levels[cell_index % size] when trend_levels is given
// (round-robin, so classes are balanced) and trend_per_year otherwise.
//
// A variable with copy_of set is instead
//   value = copy_gain * value(copy_of) + copy_offset + copy_noise_sd * N(0, 1)
// with independent white noise per entry.
// ---------------------------------------------------------------------------

struct SynthVariable {
    VariableId id = VariableId::tmp;
    double base = 0.0;
    double base_spread = 0.0;
    double seasonal_amplitude = 0.0;
    double amplitude_spread = 0.0;
    double seasonal_phase = 0.0;
    double phase_spread = 0.0;
    double trend_per_year = 0.0;
    double trend_spread = 0.0;
    std::vector<double> trend_levels;
    double trend_phase_coupling = 0.0;
    double noise_sd = 0.0;
    double ar1_coefficient = 0.0;
    std::optional<VariableId> copy_of;
    double copy_gain = 1.0;
    double copy_offset = 0.0;
    double copy_noise_sd = 0.0;
};

struct SynthSpec {
    int n_cells = 100;
    int n_years = 50;
    int start_year = 1901;
    std::uint64_t seed = 1;
    /// Sorted by canonical index on validation.
    std::vector<SynthVariable> variables;

    void validate() const;
    SynthVariable& variable(VariableId v);
};

/// Ground-truth parameters retained by the generator for one (variable, cell).
struct CellTruth {
    double base = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;
    double trend = 0.0;
};

struct SyntheticClimate {
    ClimateCube cube;
    /// truth[slot][cell], slot order as in cube.variables(). Copies hold their source's truth.
    std::vector<std::vector<CellTruth>> truth;

    const CellTruth& truth_of(VariableId v, std::size_t cell) const;
};

SyntheticClimate synth_generate(const SynthSpec& spec);

/// Parses a key/value synthetic spec:
///
///   n_cells = 200
///   seed = 7
///   tmp.base = 12.5
///   tmp.trend_levels = 0.3, 0.15, 0.05, -0.05, -0.2
///   vap.copy_of = tmp
///
/// Blank lines and '#' comments are ignored. A variable is included when any
/// of its keys appears.
SynthSpec parse_synth_spec(std::string_view text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string format_synth_spec(const SynthSpec& spec);

}  // namespace varenn
