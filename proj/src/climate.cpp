#include "varenn/climate.hpp"

#include <algorithm>
#include <bit>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "varenn/error.hpp"

namespace varenn {

namespace {

constexpr std::string_view kCubeMagic = "VCUBE1";
constexpr std::uint16_t kCubeVersion = 1;
constexpr std::uint32_t kCanonicalNaN = 0x7fc00000u;

}  // namespace

const std::array<VariableInfo, kVariableCount>& variable_catalog() {
    static const std::array<VariableInfo, kVariableCount> catalog{{
        {VariableId::cld, "cld", "cloud cover", "%"},
        {VariableId::dtr, "dtr", "diurnal temperature range", "°C"},
        {VariableId::frs, "frs", "frost day frequency", "days"},
        {VariableId::pet, "pet", "potential evapotranspiration", "mm d⁻¹"},
        {VariableId::pre, "pre", "precipitation", "mm mo⁻¹"},
        {VariableId::tmp, "tmp", "daily mean temperature", "°C"},
        {VariableId::vap, "vap", "vapor pressure", "hPa"},
        {VariableId::wet, "wet", "wet day frequency", "days"},
    }};
    return catalog;
}

VariableId variable_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kVariableCount))
        throw ValidationError("variable index out of range: " + std::to_string(index));
    return static_cast<VariableId>(index);
}

std::string_view code_of(VariableId v) { return variable_catalog()[static_cast<std::size_t>(v)].code; }
std::string_view units_of(VariableId v) { return variable_catalog()[static_cast<std::size_t>(v)].units; }

VariableId parse_variable(std::string_view code) {
    for (const auto& info : variable_catalog())
        if (info.code == code) return info.id;
    throw ValidationError("unknown variable code '" + std::string(code) + "'");
}

std::vector<VariableId> parse_variable_list(std::string_view csv) {
    std::vector<VariableId> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        std::size_t end = csv.find(',', start);
        if (end == std::string_view::npos) end = csv.size();
        std::string_view tok = csv.substr(start, end - start);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        if (!tok.empty()) out.push_back(parse_variable(tok));
        start = end + 1;
    }
    return out;
}

std::string join_codes(std::span<const VariableId> vars, char sep) {
    std::string s;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (i) s += sep;
        s += code_of(vars[i]);
    }
    return s;
}

ClimateCube::ClimateCube(std::vector<VariableId> variables, int n_months, int start_year,
                         std::vector<GridCell> grid, std::vector<float> values)
    : variables_(std::move(variables)),
      n_months_(n_months),
      start_year_(start_year),
      grid_(std::move(grid)),
      values_(std::move(values)) {
    validate();
}

void ClimateCube::validate() const {
    if (n_months_ <= 0 || n_months_ % 12 != 0)
        throw ValidationError("n_months must be a positive multiple of 12, got " + std::to_string(n_months_));
    std::set<VariableId> seen;
    for (VariableId v : variables_)
        if (!seen.insert(v).second) throw ValidationError("duplicate variable '" + std::string(code_of(v)) + "'");
    const std::size_t expected = variables_.size() * static_cast<std::size_t>(n_months_) * grid_.size();
    if (values_.size() != expected)
        throw ValidationError("values length " + std::to_string(values_.size()) + " != " + std::to_string(expected));
    std::set<std::int64_t> ids;
    for (const auto& c : grid_) {
        if (!(c.lat >= -90.0 && c.lat <= 90.0)) throw ValidationError("cell latitude out of range");
        if (!(c.lon >= -180.0 && c.lon < 180.0)) throw ValidationError("cell longitude out of range");
        if (!ids.insert(c.cell_id).second)
            throw ValidationError("duplicate cell_id " + std::to_string(c.cell_id));
    }
}

std::optional<std::size_t> ClimateCube::slot_of(VariableId v) const {
    auto it = std::find(variables_.begin(), variables_.end(), v);
    if (it == variables_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - variables_.begin());
}

std::size_t ClimateCube::require_slot(VariableId v) const {
    auto s = slot_of(v);
    if (!s) throw ValidationError("cube has no variable '" + std::string(code_of(v)) + "'");
    return *s;
}

std::optional<std::size_t> ClimateCube::cell_index(std::int64_t cell_id) const {
    for (std::size_t i = 0; i < grid_.size(); ++i)
        if (grid_[i].cell_id == cell_id) return i;
    return std::nullopt;
}

bool operator==(const ClimateCube& a, const ClimateCube& b) {
    if (a.variables_ != b.variables_ || a.n_months_ != b.n_months_ || a.start_year_ != b.start_year_ ||
        a.grid_ != b.grid_ || a.values_.size() != b.values_.size())
        return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
        const float x = a.values_[i], y = b.values_[i];
        if (is_missing(x) != is_missing(y)) return false;
        if (!is_missing(x) && std::bit_cast<std::uint32_t>(x) != std::bit_cast<std::uint32_t>(y)) return false;
    }
    return true;
}

std::vector<std::uint8_t> encode_cube(const ClimateCube& cube) {
    detail::ByteWriter w;
    w.bytes(kCubeMagic);
    w.u16(kCubeVersion);
    w.u32(static_cast<std::uint32_t>(cube.variables().size()));
    w.u32(static_cast<std::uint32_t>(cube.n_months()));
    w.u32(static_cast<std::uint32_t>(cube.n_cells()));
    w.i32(cube.start_year());
    for (VariableId v : cube.variables()) w.u8(static_cast<std::uint8_t>(v));
    for (const auto& c : cube.grid()) {
        w.i64(c.cell_id);
        w.f64(c.lat);
        w.f64(c.lon);
    }
    w.buffer().reserve(w.buffer().size() + cube.values().size() * 4);
    for (float x : cube.values()) {
        if (is_missing(x))
            w.u32(kCanonicalNaN);
        else
            w.f32(x);
    }
    return std::move(w.buffer());
}

ClimateCube decode_cube(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "VCUBE1");
    if (bytes.size() < kCubeMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kCubeMagic.size()) != kCubeMagic)
        throw FormatError("bad magic: not a VCUBE1 file");
    r.bytes(kCubeMagic.size());
    const std::uint16_t version = r.u16();
    if (version != kCubeVersion) throw FormatError("unsupported VCUBE1 version " + std::to_string(version));
    const std::uint32_t n_vars = r.u32();
    const std::uint32_t n_months = r.u32();
    const std::uint32_t n_cells = r.u32();
    const std::int32_t start_year = r.i32();
    if (n_vars > kVariableCount) throw FormatError("too many variables: " + std::to_string(n_vars));

    std::vector<VariableId> vars;
    for (std::uint32_t i = 0; i < n_vars; ++i) {
        const std::uint8_t code = r.u8();
        if (code >= kVariableCount) throw FormatError("unknown variable code " + std::to_string(code));
        vars.push_back(static_cast<VariableId>(code));
    }
    r.need(static_cast<std::size_t>(n_cells) * 24);
    std::vector<GridCell> grid(n_cells);
    for (auto& c : grid) {
        c.cell_id = r.i64();
        c.lat = r.f64();
        c.lon = r.f64();
    }
    const std::size_t n_values = static_cast<std::size_t>(n_vars) * n_months * n_cells;
    if (r.remaining() != n_values * 4)
        throw LengthError("VCUBE1 payload holds " + std::to_string(r.remaining()) + " bytes, header declares " +
                          std::to_string(n_values * 4));
    std::vector<float> values(n_values);
    for (auto& x : values) x = r.f32();
    return ClimateCube(std::move(vars), static_cast<int>(n_months), start_year, std::move(grid), std::move(values));
}

ClimateCube load_cube(const std::filesystem::path& path) { return decode_cube(detail::read_file(path)); }

void save_cube(const ClimateCube& cube, const std::filesystem::path& path) {
    detail::write_file(path, encode_cube(cube));
}

const ValueRange& ScalingStats::of(VariableId v) const {
    const auto& r = ranges[static_cast<std::size_t>(v)];
    if (!r) throw StatisticsError("no scaling statistics for variable '" + std::string(code_of(v)) + "'");
    return *r;
}

ScalingStats global_minmax(const ClimateCube& cube) {
    ScalingStats stats;
    const std::size_t block = static_cast<std::size_t>(cube.n_months()) * cube.n_cells();
    for (std::size_t s = 0; s < cube.variables().size(); ++s) {
        auto data = cube.values().subspan(s * block, block);
        bool any = false;
        double lo = 0.0, hi = 0.0;
        for (float x : data) {
            if (is_missing(x)) continue;
            if (!any) {
                lo = hi = x;
                any = true;
            } else {
                lo = std::min<double>(lo, x);
                hi = std::max<double>(hi, x);
            }
        }
        if (!any)
            throw StatisticsError("variable '" + std::string(code_of(cube.variables()[s])) +
                                  "' has no non-missing values");
        stats.set(cube.variables()[s], {lo, hi});
    }
    return stats;
}

}  // namespace varenn
