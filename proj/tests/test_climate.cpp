#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "varenn/climate.hpp"
#include "varenn/error.hpp"
#include "varenn/windowing.hpp"

using namespace varenn;

namespace {

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

TEST_CASE("variable catalog") {
    const auto& cat = variable_catalog();
    std::set<int> idx;
    for (const auto& v : cat) idx.insert(canonical_index(v.id));
    CHECK(idx.size() == 8);
    CHECK(*idx.begin() == 0);
    CHECK(*idx.rbegin() == 7);
    CHECK(units_of(VariableId::tmp) == "°C");
    CHECK(units_of(VariableId::pre) == "mm mo⁻¹");
    CHECK(code_of(VariableId::cld) == "cld");
    CHECK(code_of(VariableId::wet) == "wet");
    for (int i = 0; i < 8; ++i) CHECK(parse_variable(code_of(variable_from_index(i))) == variable_from_index(i));
    CHECK_THROWS_AS(parse_variable("xyz"), ValidationError);
    CHECK(join_codes(parse_variable_list("pet,tmp,vap")) == "pet,tmp,vap");
}

TEST_CASE("cube invariants are enforced at construction") {
    CHECK_THROWS_AS(ClimateCube({VariableId::tmp}, 350, 1901, {{1, 0, 0}}, std::vector<float>(350)), ValidationError);
    CHECK_THROWS_AS(ClimateCube({VariableId::tmp, VariableId::tmp}, 12, 1901, {{1, 0, 0}}, std::vector<float>(24)),
                    ValidationError);
    CHECK_THROWS_AS(ClimateCube({VariableId::tmp}, 12, 1901, {{1, 0, 0}}, std::vector<float>(11)), ValidationError);
    CHECK_THROWS_AS(ClimateCube({VariableId::tmp}, 12, 1901, {{1, 95, 0}}, std::vector<float>(12)), ValidationError);
    CHECK_THROWS_AS(ClimateCube({VariableId::tmp}, 12, 1901, {{1, 0, 180}}, std::vector<float>(12)), ValidationError);
    CHECK_THROWS_AS(ClimateCube({VariableId::tmp}, 12, 1901, {{1, 0, 0}, {1, 1, 1}}, std::vector<float>(24)),
                    ValidationError);
}

TEST_CASE("save/load round trip and determinism") {
    testing::TempDir dir("cube");
    for (std::uint32_t seed = 1; seed <= 20; ++seed) {
        const auto cube = testing::random_cube({VariableId::pre, VariableId::tmp}, 1 + seed % 4, 3 + seed % 5, seed,
                                               seed % 3 == 0 ? 0.1 : 0.0);
        save_cube(cube, dir / "a.vcube");
        save_cube(cube, dir / "b.vcube");
        CHECK(testing::read_bytes(dir / "a.vcube") == testing::read_bytes(dir / "b.vcube"));
        CHECK(load_cube(dir / "a.vcube") == cube);
    }
}

TEST_CASE("header echoes counts") {
    ClimateCube cube({VariableId::tmp}, 360, 1901, {{5, 10, 20}}, std::vector<float>(360, 1.0f));
    const auto bytes = encode_cube(cube);
    CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "VCUBE1");
    CHECK(le32(bytes, 8) == 1);
    CHECK(le32(bytes, 12) == 360);
    CHECK(le32(bytes, 16) == 1);
}

TEST_CASE("decode errors") {
    ClimateCube one({VariableId::tmp}, 12, 1901, {{5, 10, 20}}, std::vector<float>(12, 1.0f));
    auto bytes = encode_cube(one);

    auto bad = bytes;
    std::copy_n("XXXXXX", 6, bad.begin());
    CHECK_THROWS_AS(decode_cube(bad), FormatError);

    // declare two variables but keep one data block
    ClimateCube two({VariableId::pre, VariableId::tmp}, 12, 1901, {{5, 10, 20}}, std::vector<float>(24, 1.0f));
    auto two_bytes = encode_cube(two);
    two_bytes.resize(two_bytes.size() - 12 * 4);
    CHECK_THROWS_AS(decode_cube(two_bytes), LengthError);

    // duplicate variable codes
    auto dup = encode_cube(two);
    dup[25] = dup[24];
    CHECK_THROWS_AS(decode_cube(dup), ValidationError);

    auto truncated = bytes;
    truncated.resize(10);
    CHECK_THROWS_AS(decode_cube(truncated), LengthError);

    CHECK_THROWS_AS(load_cube("/nonexistent/dir/x.vcube"), IoError);
    CHECK_THROWS_AS(save_cube(one, "/nonexistent/dir/x.vcube"), IoError);
}

TEST_CASE("global_minmax") {
    SUBCASE("constant field") {
        ClimateCube c({VariableId::tmp}, 12, 1901, {{1, 0, 0}}, std::vector<float>(12, 7.0f));
        const auto s = global_minmax(c);
        CHECK(s.of(VariableId::tmp).min == 7.0);
        CHECK(s.of(VariableId::tmp).max == 7.0);
    }
    SUBCASE("missing skipped") {
        std::vector<float> v(12, 5.0f);
        v[0] = 0;
        v[2] = kMissing;
        v[3] = 10;
        ClimateCube c({VariableId::tmp}, 12, 1901, {{1, 0, 0}}, v);
        const auto s = global_minmax(c);
        CHECK(s.of(VariableId::tmp).min == 0.0);
        CHECK(s.of(VariableId::tmp).max == 10.0);
    }
    SUBCASE("entirely missing variable names it") {
        std::vector<float> v(24, 1.0f);
        for (int i = 12; i < 24; ++i) v[static_cast<std::size_t>(i)] = kMissing;
        ClimateCube c({VariableId::pre, VariableId::vap}, 12, 1901, {{1, 0, 0}}, v);
        try {
            global_minmax(c);
            FAIL("expected StatisticsError");
        } catch (const StatisticsError& e) {
            CHECK(std::string(e.what()).find("vap") != std::string::npos);
        }
    }
    SUBCASE("random cubes match a full scan") {
        for (std::uint32_t seed = 1; seed <= 10; ++seed) {
            const auto c = testing::random_cube({VariableId::cld, VariableId::frs, VariableId::wet}, 2, 7, seed, 0.2);
            const auto s = global_minmax(c);
            for (std::size_t slot = 0; slot < 3; ++slot) {
                double lo, hi;
                oracle::minmax_scan(c, slot, lo, hi);
                CHECK(s.of(c.variables()[slot]).min == lo);
                CHECK(s.of(c.variables()[slot]).max == hi);
            }
        }
    }
    SUBCASE("absent variable has no stats") {
        ClimateCube c({VariableId::tmp}, 12, 1901, {{1, 0, 0}}, std::vector<float>(12, 1.0f));
        CHECK_THROWS_AS(global_minmax(c).of(VariableId::pre), StatisticsError);
    }
}

TEST_CASE("synthetic generator") {
    SynthSpec spec;
    spec.n_cells = 6;
    spec.n_years = 50;
    spec.seed = 5;
    SynthVariable t;
    t.id = VariableId::tmp;
    t.base = 10;
    t.base_spread = 4;
    t.seasonal_amplitude = 8;
    t.amplitude_spread = 2;
    t.seasonal_phase = 6;
    t.phase_spread = 2;
    t.trend_levels = {0.3, -0.1};
    t.trend_spread = 0.01;
    spec.variables.push_back(t);

    SUBCASE("zero noise obeys the closed form") {
        const auto s = synth_generate(spec);
        for (std::size_t c = 0; c < s.cube.n_cells(); ++c) {
            const auto& tr = s.truth_of(VariableId::tmp, c);
            for (int y = 0; y < 50; ++y)
                for (int m = 0; m < 12; ++m) {
                    const double want = tr.base + tr.amplitude * std::cos(2 * std::numbers::pi * (m - tr.phase) / 12) +
                                        tr.trend * y;
                    const double got = s.cube.at(0, y * 12 + m, c);
                    CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
                }
        }
    }
    SUBCASE("pure seasonality repeats every year") {
        spec.variables[0].trend_levels.clear();
        spec.variables[0].trend_spread = 0;
        const auto s = synth_generate(spec);
        for (std::size_t c = 0; c < s.cube.n_cells(); ++c)
            for (int y = 1; y < 50; ++y)
                for (int m = 0; m < 12; ++m) CHECK(s.cube.at(0, y * 12 + m, c) == s.cube.at(0, m, c));
    }
    SUBCASE("linear trend gives delta 20t over a 30+10 window") {
        auto& v = spec.variables[0];
        v.seasonal_amplitude = 0;
        v.amplitude_spread = 0;
        v.trend_levels.clear();
        v.trend_spread = 0;
        v.trend_per_year = 0.125;
        const auto s = synth_generate(spec);
        for (const auto& w : enumerate_windows(50, 30, 10)) {
            // brute-force averaging
            double a = 0, b = 0;
            for (int mm = w.start_month_index; mm < w.training_end_month(); ++mm) a += s.cube.at(0, mm, 0);
            for (int mm = w.training_end_month(); mm < w.labeling_end_month(); ++mm) b += s.cube.at(0, mm, 0);
            CHECK(b / 120 - a / 360 == doctest::Approx(20 * 0.125).epsilon(1e-5));
        }
    }
    SUBCASE("deterministic given the seed") {
        spec.variables[0].noise_sd = 1.5;
        spec.variables[0].ar1_coefficient = 0.5;
        CHECK(synth_generate(spec).cube == synth_generate(spec).cube);
        auto other = spec;
        other.seed = 6;
        CHECK_FALSE(synth_generate(other).cube == synth_generate(spec).cube);
    }
    SUBCASE("validation") {
        spec.variables[0].ar1_coefficient = 1.0;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
    }
    SUBCASE("copies track their source") {
        SynthVariable v;
        v.id = VariableId::vap;
        v.copy_of = VariableId::tmp;
        v.copy_gain = 2;
        v.copy_offset = 1;
        spec.variables.push_back(v);
        const auto s = synth_generate(spec);
        const auto ti = s.cube.require_slot(VariableId::tmp), vi = s.cube.require_slot(VariableId::vap);
        for (int m = 0; m < s.cube.n_months(); ++m)
            CHECK(s.cube.at(vi, m, 2) == doctest::Approx(2 * s.cube.at(ti, m, 2) + 1).epsilon(1e-6));
    }
}

TEST_CASE("synth spec text round trip") {
    const auto spec = parse_synth_spec(R"(
# comment
n_cells = 12
n_years = 44
seed = 9
tmp.base = 12.5
tmp.trend_levels = 0.3, 0.15, 0.05, -0.05, -0.2
vap.copy_of = tmp
vap.copy_noise_sd = 2
)");
    CHECK(spec.n_cells == 12);
    CHECK(spec.n_years == 44);
    CHECK(spec.variables.size() == 2);
    const auto again = parse_synth_spec(format_synth_spec(spec));
    CHECK(format_synth_spec(again) == format_synth_spec(spec));
    CHECK(synth_generate(again).cube == synth_generate(spec).cube);
    CHECK_THROWS_AS(parse_synth_spec("tmp.bogus = 1"), ConfigError);
    CHECK_THROWS_AS(parse_synth_spec("n_cells = abc"), ConfigError);
}
