#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "varenn/dataset.hpp"
#include "varenn/error.hpp"

using namespace varenn;

namespace {

std::vector<GridCell> cells(std::size_t n) {
    std::vector<GridCell> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({static_cast<std::int64_t>(3 * i + 11), 0.0, 0.0});
    return out;
}

SyntheticClimate planted() { return synth_generate(load_synth_spec(VARENN_SOURCE_DIR "/configs/planted_trends.synth")); }

}  // namespace

TEST_CASE("select_grids") {
    const auto cs = cells(5000);
    CHECK(select_grids(cs, 0.0, 1).size() == cs.size());
    CHECK(select_grids(cs, 1.0, 1).empty());
    CHECK_THROWS_AS(select_grids(cs, 1.5, 1), ConfigError);
    CHECK_THROWS_AS(select_grids(cs, -0.1, 1), ConfigError);

    const auto a = select_grids(cs, 0.7, 42);
    CHECK(a == select_grids(cs, 0.7, 42));
    // 1500 expected, sd ~32
    CHECK(a.size() > 1350);
    CHECK(a.size() < 1650);

    // order independence: selection of a cell depends only on its id
    std::vector<GridCell> rev(cs.rbegin(), cs.rend());
    auto b = select_grids(rev, 0.7, 42);
    std::reverse(b.begin(), b.end());
    CHECK(a == b);
}

TEST_CASE("split_counts and split_grids") {
    CHECK(split_counts(100, {0.75, 0.20, 0.05}) == std::array<std::size_t, 3>{75, 20, 5});
    CHECK(split_counts(3, {0.75, 0.20, 0.05}) == std::array<std::size_t, 3>{1, 1, 1});
    for (std::size_t n = 3; n < 300; n += 13) {
        const auto c = split_counts(n, {0.75, 0.20, 0.05});
        CHECK(c[0] + c[1] + c[2] == n);
        CHECK(c[2] >= 1);
    }
    CHECK_THROWS_AS(split_counts(10, {0.5, 0.5, 0.5}), ConfigError);

    std::vector<std::int64_t> ids;
    for (int i = 0; i < 100; ++i) ids.push_back(1000 - 7 * i);
    const auto s = split_grids(ids, {0.75, 0.20, 0.05}, 9);
    std::map<Split, int> count;
    for (Split x : s) ++count[x];
    CHECK(count[Split::train] == 75);
    CHECK(count[Split::validation] == 20);
    CHECK(count[Split::test] == 5);
    CHECK(s == split_grids(ids, {0.75, 0.20, 0.05}, 9));
    CHECK_FALSE(s == split_grids(ids, {0.75, 0.20, 0.05}, 10));

    const std::vector<std::int64_t> two{1, 2};
    CHECK_THROWS_AS(split_grids(two, {0.75, 0.20, 0.05}, 1), DatasetError);
    const std::vector<std::int64_t> dup{1, 2, 2, 3};
    CHECK_THROWS_AS(split_grids(dup, {0.75, 0.20, 0.05}, 1), ValidationError);
}

TEST_CASE("build_dataset on planted trends") {
    const auto s = planted();
    ExperimentSpec spec;
    spec.id = 6;
    spec.inputs = {VariableId::tmp};
    spec.seed = 3;
    const auto ds = build_dataset(s.cube, spec);
    const auto& m = ds.manifest;

    CHECK(m.selected_cells == 200);
    CHECK(m.records.size() == 200 * 11);
    CHECK(ds.images.count() == m.records.size());

    // labels equal the closed form 20 * trend for every record
    std::size_t agree = 0;
    for (const auto& r : m.records) {
        const auto cell = *s.cube.cell_index(r.cell_id);
        if (r.label == label_tmp(20 * s.truth_of(VariableId::tmp, cell).trend)) ++agree;
    }
    CHECK(agree == m.records.size());

    // every class is present
    const auto h = m.histogram();
    for (int k = 0; k < kClasses; ++k) CHECK(h[0][static_cast<std::size_t>(k)] > 0);

    // sorted by (cell_id, window) and no cell in two splits
    std::map<std::int64_t, Split> owner;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        if (i > 0) {
            const auto& p = m.records[i - 1];
            CHECK((p.cell_id < r.cell_id ||
                   (p.cell_id == r.cell_id && p.window.start_month_index < r.window.start_month_index)));
        }
        auto [it, fresh] = owner.emplace(r.cell_id, r.split);
        if (!fresh) CHECK(it->second == r.split);
    }
    CHECK(owner.size() == 200);

    // histogram sums equal record counts
    for (Split sp : {Split::train, Split::validation, Split::test}) {
        std::size_t sum = 0;
        for (auto c : h[static_cast<std::size_t>(sp)]) sum += c;
        CHECK(sum == m.count(sp));
    }
}

TEST_CASE("labels match a naive pass over the cube") {
    const auto cube = testing::random_cube({VariableId::pre, VariableId::tmp}, 44, 12, 5, 0.0005);
    ExperimentSpec spec;
    spec.target = Target::PRE;
    spec.inputs = {VariableId::tmp};
    spec.thresholds = LabelThresholds{{1.0, 0.3, -0.3, -1.0}};
    const auto ds = build_dataset(cube, spec);

    std::size_t expected_records = 0, expected_excluded = 0;
    std::map<std::pair<std::int64_t, int>, int> naive;
    for (std::size_t c = 0; c < cube.n_cells(); ++c)
        for (int start = 0; start + 40 <= 44; ++start) {
            double a = 0, b = 0;
            bool complete = true;
            for (int mo = 12 * start; mo < 12 * (start + 40); ++mo) {
                // target over both periods, the image input over the training years only
                complete = complete && !std::isnan(cube.at(0, mo, c));
                if (mo < 12 * (start + 30)) complete = complete && !std::isnan(cube.at(1, mo, c));
                (mo < 12 * (start + 30) ? a : b) += cube.at(0, mo, c);
            }
            if (!complete) {
                ++expected_excluded;
                continue;
            }
            ++expected_records;
            const double d = b / 120 - a / 360;
            naive[{cube.grid()[c].cell_id, start}] = d >= 1.0 ? 1 : d >= 0.3 ? 2 : d >= -0.3 ? 3 : d >= -1.0 ? 4 : 5;
        }
    REQUIRE(ds.manifest.records.size() == expected_records);
    CHECK(ds.manifest.excluded_windows == expected_excluded);
    CHECK(expected_excluded > 0);
    for (const auto& r : ds.manifest.records) {
        auto it = naive.find({r.cell_id, r.window.start_year_index()});
        REQUIRE(it != naive.end());
        CHECK(r.label.ordinal == it->second);
    }
}

TEST_CASE("knockout datasets carry striped images") {
    const auto s = planted();
    ExperimentSpec spec;
    spec.inputs = {VariableId::pre, VariableId::tmp};
    spec.knockout = Knockout::interannual_only;
    spec.c_t = 0.9;
    const auto ds = build_dataset(s.cube, spec);
    for (std::size_t i = 0; i < ds.images.count(); ++i) {
        const auto img = ds.images.image(i);
        for (int row = 0; row < 60; ++row)
            for (int col = 0; col < 60; ++col)
                for (int ch = 0; ch < 3; ++ch)
                    CHECK(img[static_cast<std::size_t>((row * 60 + col) * 3 + ch)] ==
                          img[static_cast<std::size_t>(col * 3 + ch)]);
    }
}

TEST_CASE("ten-year training windows") {
    SynthSpec spec;
    spec.n_cells = 5;
    spec.n_years = 116;
    SynthVariable t;
    t.id = VariableId::tmp;
    t.seasonal_amplitude = 5;
    spec.variables.push_back(t);
    const auto s = synth_generate(spec);
    ExperimentSpec e;
    e.inputs = {VariableId::tmp};
    e.training_years = 10;
    const auto ds = build_dataset(s.cube, e);
    CHECK(ds.manifest.records.size() == 5 * 97);
}

TEST_CASE("manifest reproducibility and text round trip") {
    const auto s = planted();
    ExperimentSpec spec;
    spec.id = 14;
    spec.inputs = {VariableId::pre, VariableId::tmp};
    spec.c_t = 0.5;
    spec.seed = 77;
    const auto a = build_dataset(s.cube, spec, 1);
    const auto b = build_dataset(s.cube, spec, 3);
    CHECK(format_manifest(a.manifest) == format_manifest(b.manifest));
    CHECK(a.images == b.images);

    const auto text = format_manifest(a.manifest);
    const auto back = parse_manifest(text);
    CHECK(back == a.manifest);
    CHECK(format_manifest(back) == text);

    testing::TempDir dir("manifest");
    save_manifest(a.manifest, dir / "m.txt");
    CHECK(load_manifest(dir / "m.txt") == a.manifest);

    CHECK_THROWS_AS(parse_manifest("hello\n"), FormatError);
    auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
    CHECK_THROWS_AS(parse_manifest(cut), LengthError);
}

TEST_CASE("label shuffle keeps the label multiset") {
    const auto s = planted();
    ExperimentSpec spec;
    spec.inputs = {VariableId::tmp};
    const auto plain = build_dataset(s.cube, spec);
    spec.shuffle_labels = true;
    const auto shuffled = build_dataset(s.cube, spec);
    std::multiset<int> x, y;
    std::size_t same = 0;
    for (std::size_t i = 0; i < plain.manifest.records.size(); ++i) {
        x.insert(plain.manifest.records[i].label.ordinal);
        y.insert(shuffled.manifest.records[i].label.ordinal);
        same += plain.manifest.records[i].label == shuffled.manifest.records[i].label;
    }
    CHECK(x == y);
    CHECK(same < plain.manifest.records.size() / 2);
}

TEST_CASE("dataset errors") {
    const auto s = planted();
    ExperimentSpec spec;
    spec.inputs = {VariableId::vap};
    CHECK_THROWS_AS(build_dataset(s.cube, spec), ValidationError);
    spec.inputs = {VariableId::tmp};
    spec.c_t = 1.0;
    CHECK_THROWS_AS(build_dataset(s.cube, spec), DatasetError);

    // every window has a gap -> empty dataset
    std::vector<float> v(s.cube.values().begin(), s.cube.values().end());
    const auto ti = s.cube.require_slot(VariableId::tmp);
    for (std::size_t c = 0; c < s.cube.n_cells(); ++c)
        v[(ti * static_cast<std::size_t>(s.cube.n_months()) + 12 * 25) * s.cube.n_cells() + c] = kMissing;
    ClimateCube holed(s.cube.variables(), s.cube.n_months(), 1901, s.cube.grid(), v);
    spec.c_t = 0.0;
    CHECK_THROWS_AS(build_dataset(holed, spec), DatasetError);
}
