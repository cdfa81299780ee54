#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "varenn/climate.hpp"
#include "varenn/error.hpp"
#include "varenn/rng.hpp"

namespace varenn {

namespace {

// Half-degree land-style lattice used to place synthetic cells.
constexpr double kResolution = 0.5;
constexpr double kLatTop = 80.0;
constexpr double kLatBottom = -60.0;
constexpr int kRows = static_cast<int>((kLatTop - kLatBottom) / kResolution);
constexpr int kCols = static_cast<int>(360.0 / kResolution);

std::vector<GridCell> synth_layout(int n_cells, std::uint64_t seed) {
    RandomStream rng(seed, StreamTag::synth_layout);
    std::set<std::int64_t> ids;
    while (static_cast<int>(ids.size()) < n_cells)
        ids.insert(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(kRows) * kCols)));
    std::vector<GridCell> grid;
    grid.reserve(ids.size());
    for (std::int64_t id : ids) {
        const int row = static_cast<int>(id / kCols);
        const int col = static_cast<int>(id % kCols);
        grid.push_back({id, kLatTop - kResolution * (row + 0.5), -180.0 + kResolution * (col + 0.5)});
    }
    return grid;
}

double parse_number(std::string_view key, std::string_view text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("invalid number for '" + std::string(key) + "': '" + std::string(text) + "'");
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(',', start);
        if (end == std::string_view::npos) end = text.size();
        auto tok = trim(text.substr(start, end - start));
        if (!tok.empty()) out.push_back(parse_number(key, tok));
        start = end + 1;
    }
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

SynthVariable& SynthSpec::variable(VariableId v) {
    for (auto& sv : variables)
        if (sv.id == v) return sv;
    SynthVariable sv;
    sv.id = v;
    variables.push_back(sv);
    std::sort(variables.begin(), variables.end(),
              [](const SynthVariable& a, const SynthVariable& b) { return a.id < b.id; });
    for (auto& x : variables)
        if (x.id == v) return x;
    throw std::logic_error("unreachable");
}

void SynthSpec::validate() const {
    if (n_cells < 1 || n_cells > kRows * kCols)
        throw ValidationError("n_cells must be in [1, " + std::to_string(kRows * kCols) + "]");
    if (n_years < 1) throw ValidationError("n_years must be positive");
    if (variables.empty()) throw ValidationError("synthetic spec has no variables");
    std::set<VariableId> ids;
    for (const auto& v : variables)
        if (!ids.insert(v.id).second) throw ValidationError("duplicate variable " + std::string(code_of(v.id)));
    for (const auto& v : variables) {
        if (!(v.ar1_coefficient >= 0.0 && v.ar1_coefficient < 1.0))
            throw ValidationError(std::string(code_of(v.id)) + ".ar1_coefficient must be in [0, 1)");
        if (v.noise_sd < 0.0 || v.copy_noise_sd < 0.0)
            throw ValidationError(std::string(code_of(v.id)) + ": noise sd must be non-negative");
        if (v.copy_of) {
            auto src = std::find_if(variables.begin(), variables.end(),
                                    [&](const SynthVariable& s) { return s.id == *v.copy_of; });
            if (src == variables.end())
                throw ValidationError(std::string(code_of(v.id)) + ".copy_of refers to an absent variable");
            if (src->copy_of || src->id == v.id)
                throw ValidationError(std::string(code_of(v.id)) + ".copy_of must name a non-copy variable");
        }
    }
}

const CellTruth& SyntheticClimate::truth_of(VariableId v, std::size_t cell) const {
    return truth.at(cube.require_slot(v)).at(cell);
}

SyntheticClimate synth_generate(const SynthSpec& spec_in) {
    SynthSpec spec = spec_in;
    std::sort(spec.variables.begin(), spec.variables.end(),
              [](const SynthVariable& a, const SynthVariable& b) { return a.id < b.id; });
    spec.validate();

    const auto grid = synth_layout(spec.n_cells, spec.seed);
    const std::size_t n_cells = grid.size();
    const int n_months = spec.n_years * 12;
    const std::size_t block = static_cast<std::size_t>(n_months) * n_cells;
    const std::size_t n_vars = spec.variables.size();

    std::vector<VariableId> ids;
    for (const auto& v : spec.variables) ids.push_back(v.id);
    std::vector<float> values(n_vars * block);
    std::vector<std::vector<CellTruth>> truth(n_vars, std::vector<CellTruth>(n_cells));
    // Sources are generated in double precision and kept so copies see the exact signal.
    std::map<std::size_t, std::vector<double>> source_values;

    auto index_of = [&](VariableId id) {
        return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
    };

    for (std::size_t s = 0; s < n_vars; ++s) {
        const auto& v = spec.variables[s];
        if (v.copy_of) continue;
        std::vector<double> raw(block);
        for (std::size_t c = 0; c < n_cells; ++c) {
            const auto key = static_cast<std::uint64_t>(grid[c].cell_id);
            RandomStream cell_rng(spec.seed, StreamTag::synth_cell, {static_cast<std::uint64_t>(v.id), key});
            CellTruth t;
            t.base = v.base + v.base_spread * cell_rng.uniform(-1.0, 1.0);
            t.amplitude = v.seasonal_amplitude + v.amplitude_spread * cell_rng.uniform(-1.0, 1.0);
            t.phase = v.seasonal_phase + v.phase_spread * cell_rng.uniform01();
            const double level = v.trend_levels.empty() ? v.trend_per_year : v.trend_levels[c % v.trend_levels.size()];
            t.trend = level + v.trend_spread * cell_rng.uniform(-1.0, 1.0) +
                      v.trend_phase_coupling * std::cos(2.0 * std::numbers::pi * (t.phase - v.seasonal_phase) / 12.0);
            truth[s][c] = t;

            RandomStream noise_rng(spec.seed, StreamTag::synth_noise, {static_cast<std::uint64_t>(v.id), key});
            const double innovation = std::sqrt(1.0 - v.ar1_coefficient * v.ar1_coefficient) * v.noise_sd;
            double e = 0.0;
            for (int t_month = 0; t_month < n_months; ++t_month) {
                if (v.noise_sd > 0.0) {
                    const double z = noise_rng.normal();
                    e = t_month == 0 ? v.noise_sd * z : v.ar1_coefficient * e + innovation * z;
                }
                const int y = t_month / 12;
                const int m = t_month % 12;
                raw[static_cast<std::size_t>(t_month) * n_cells + c] =
                    t.base + t.amplitude * std::cos(2.0 * std::numbers::pi * (m - t.phase) / 12.0) + t.trend * y + e;
            }
        }
        for (std::size_t i = 0; i < block; ++i) values[s * block + i] = static_cast<float>(raw[i]);
        source_values.emplace(s, std::move(raw));
    }

    for (std::size_t s = 0; s < n_vars; ++s) {
        const auto& v = spec.variables[s];
        if (!v.copy_of) continue;
        const std::size_t src = index_of(*v.copy_of);
        const auto& raw = source_values.at(src);
        for (std::size_t c = 0; c < n_cells; ++c) {
            const auto& st = truth[src][c];
            truth[s][c] = {v.copy_gain * st.base + v.copy_offset, v.copy_gain * st.amplitude, st.phase,
                           v.copy_gain * st.trend};
            RandomStream noise_rng(spec.seed, StreamTag::synth_noise,
                                   {static_cast<std::uint64_t>(v.id), static_cast<std::uint64_t>(grid[c].cell_id)});
            for (int t_month = 0; t_month < n_months; ++t_month) {
                const std::size_t i = static_cast<std::size_t>(t_month) * n_cells + c;
                double x = v.copy_gain * raw[i] + v.copy_offset;
                if (v.copy_noise_sd > 0.0) x += v.copy_noise_sd * noise_rng.normal();
                values[s * block + i] = static_cast<float>(x);
            }
        }
    }

    return {ClimateCube(std::move(ids), n_months, spec.start_year, grid, std::move(values)), std::move(truth)};
}

SynthSpec parse_synth_spec(std::string_view text) {
    SynthSpec spec;
    spec.variables.clear();
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));

        if (key == "n_cells") {
            spec.n_cells = static_cast<int>(parse_number(key, value));
        } else if (key == "n_years") {
            spec.n_years = static_cast<int>(parse_number(key, value));
        } else if (key == "start_year") {
            spec.start_year = static_cast<int>(parse_number(key, value));
        } else if (key == "seed") {
            std::uint64_t seed = 0;
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seed);
            if (ec != std::errc() || ptr != value.data() + value.size())
                throw ConfigError("invalid seed '" + std::string(value) + "'");
            spec.seed = seed;
        } else {
            const auto dot = key.find('.');
            if (dot == std::string_view::npos) throw ConfigError("unknown key '" + std::string(key) + "'");
            VariableId id;
            try {
                id = parse_variable(key.substr(0, dot));
            } catch (const ValidationError&) {
                throw ConfigError("unknown variable in key '" + std::string(key) + "'");
            }
            auto& v = spec.variable(id);
            const auto field = key.substr(dot + 1);
            if (field == "base") v.base = parse_number(key, value);
            else if (field == "base_spread") v.base_spread = parse_number(key, value);
            else if (field == "seasonal_amplitude") v.seasonal_amplitude = parse_number(key, value);
            else if (field == "amplitude_spread") v.amplitude_spread = parse_number(key, value);
            else if (field == "seasonal_phase") v.seasonal_phase = parse_number(key, value);
            else if (field == "phase_spread") v.phase_spread = parse_number(key, value);
            else if (field == "trend_per_year") v.trend_per_year = parse_number(key, value);
            else if (field == "trend_spread") v.trend_spread = parse_number(key, value);
            else if (field == "trend_levels") v.trend_levels = parse_list(key, value);
            else if (field == "trend_phase_coupling") v.trend_phase_coupling = parse_number(key, value);
            else if (field == "noise_sd") v.noise_sd = parse_number(key, value);
            else if (field == "ar1_coefficient") v.ar1_coefficient = parse_number(key, value);
            else if (field == "copy_of") {
                try {
                    v.copy_of = parse_variable(value);
                } catch (const ValidationError&) {
                    throw ConfigError("invalid copy_of '" + std::string(value) + "'");
                }
            } else if (field == "copy_gain") v.copy_gain = parse_number(key, value);
            else if (field == "copy_offset") v.copy_offset = parse_number(key, value);
            else if (field == "copy_noise_sd") v.copy_noise_sd = parse_number(key, value);
            else throw ConfigError("unknown field '" + std::string(field) + "'");
        }
    }
    spec.validate();
    return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_synth_spec(ss.str());
}

std::string format_synth_spec(const SynthSpec& spec) {
    std::ostringstream os;
    os << "n_cells = " << spec.n_cells << "\n"
       << "n_years = " << spec.n_years << "\n"
       << "start_year = " << spec.start_year << "\n"
       << "seed = " << spec.seed << "\n";
    for (const auto& v : spec.variables) {
        const std::string p = std::string(code_of(v.id)) + ".";
        if (v.copy_of) {
            os << p << "copy_of = " << code_of(*v.copy_of) << "\n"
               << p << "copy_gain = " << format_double(v.copy_gain) << "\n"
               << p << "copy_offset = " << format_double(v.copy_offset) << "\n"
               << p << "copy_noise_sd = " << format_double(v.copy_noise_sd) << "\n";
            continue;
        }
        os << p << "base = " << format_double(v.base) << "\n"
           << p << "base_spread = " << format_double(v.base_spread) << "\n"
           << p << "seasonal_amplitude = " << format_double(v.seasonal_amplitude) << "\n"
           << p << "amplitude_spread = " << format_double(v.amplitude_spread) << "\n"
           << p << "seasonal_phase = " << format_double(v.seasonal_phase) << "\n"
           << p << "phase_spread = " << format_double(v.phase_spread) << "\n"
           << p << "trend_per_year = " << format_double(v.trend_per_year) << "\n"
           << p << "trend_spread = " << format_double(v.trend_spread) << "\n";
        if (!v.trend_levels.empty()) {
            os << p << "trend_levels = ";
            for (std::size_t i = 0; i < v.trend_levels.size(); ++i)
                os << (i ? ", " : "") << format_double(v.trend_levels[i]);
            os << "\n";
        }
        os << p << "trend_phase_coupling = " << format_double(v.trend_phase_coupling) << "\n"
           << p << "noise_sd = " << format_double(v.noise_sd) << "\n"
           << p << "ar1_coefficient = " << format_double(v.ar1_coefficient) << "\n";
    }
    return os.str();
}

}  // namespace varenn
