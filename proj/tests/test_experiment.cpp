#include <doctest.h>

#include <set>
#include <sstream>

#include "helpers.hpp"
#include "varenn/error.hpp"
#include "varenn/experiment.hpp"
#include "varenn/render.hpp"

using namespace varenn;

namespace {

std::size_t data_rows(const std::string& tsv) {
    std::istringstream in(tsv);
    std::string line;
    std::size_t n = 0;
    std::getline(in, line);
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') ++n;
    return n;
}

SuiteReport fake_suite() {
    SuiteReport s;
    s.seed = 3;
    s.c_t = 0.5;
    const auto specs = enumerate_combinations(Target::TMP);
    for (const auto& spec : specs) {
        ExperimentResult r;
        r.id = spec.id;
        r.inputs = spec.inputs;
        r.ok = spec.id != 50;
        r.accuracy = 0.5 + 0.1 * static_cast<double>(spec.inputs.size()) + 0.001 * spec.id;
        r.kappa = r.accuracy + 0.05;
        r.similarity = 1.0 - 0.2 * static_cast<double>(spec.inputs.size()) + 0.0007 * spec.id;
        r.n_train = 10;
        r.n_validation = 3;
        r.n_test = 2;
        if (!r.ok) {
            r.error_category = "dataset";
            r.error = "no usable samples\tat all";
            r.kappa = std::nan("");
        }
        s.rows.push_back(r);
    }
    s.stats = compute_group_stats(s.rows);
    return s;
}

}  // namespace

TEST_CASE("combination enumeration") {
    for (Target t : {Target::TMP, Target::PRE}) {
        const auto specs = enumerate_combinations(t);
        REQUIRE(specs.size() == 92);
        std::array<int, 4> by_k{};
        for (const auto& s : specs) {
            ++by_k[s.inputs.size()];
            CHECK(s.target == t);
            CHECK_NOTHROW(s.validate());
        }
        CHECK(by_k[1] == 8);
        CHECK(by_k[2] == 28);
        CHECK(by_k[3] == 56);
        CHECK(specs[5].id == 6);
        CHECK(specs[5].inputs == std::vector<VariableId>{VariableId::tmp});
        CHECK(specs[85].id == 86);
        CHECK(specs[85].inputs == std::vector<VariableId>{VariableId::pet, VariableId::tmp, VariableId::vap});
        CHECK(specs[47].inputs == std::vector<VariableId>{VariableId::cld, VariableId::pet, VariableId::pre});
        CHECK(specs[78].inputs == std::vector<VariableId>{VariableId::frs, VariableId::pre, VariableId::wet});

        // brute-force subset generation
        std::set<std::vector<VariableId>> want, got;
        for (unsigned mask = 1; mask < 256; ++mask) {
            if (__builtin_popcount(mask) > 3) continue;
            std::vector<VariableId> v;
            for (int i = 0; i < 8; ++i)
                if (mask & (1u << i)) v.push_back(variable_from_index(i));
            want.insert(v);
        }
        for (const auto& s : specs) got.insert(s.inputs);
        CHECK(got == want);
    }
}

TEST_CASE("spec validation") {
    ExperimentSpec s;
    s.inputs = {VariableId::tmp};
    CHECK_NOTHROW(s.validate());
    s.inputs = {VariableId::tmp, VariableId::pre};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.inputs = {VariableId::cld, VariableId::frs, VariableId::pet, VariableId::pre};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.inputs = {};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.inputs = {VariableId::tmp};
    s.training_years = 7;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.training_years = 30;
    s.c_t = 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.c_t = 0;
    s.thresholds = LabelThresholds{{1, 2, 0, -1}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK(parse_target("pre") == Target::PRE);
    CHECK(parse_target("TMP") == Target::TMP);
    CHECK_THROWS_AS(parse_target("wet"), ConfigError);
}

TEST_CASE("group statistics") {
    std::vector<ExperimentResult> rows;
    for (int k = 1; k <= 3; ++k)
        for (double a : {0.6, 0.7, 0.8}) {
            ExperimentResult r;
            r.ok = true;
            r.inputs.assign(static_cast<std::size_t>(k), VariableId::tmp);
            r.accuracy = a;
            r.similarity = std::nan("");
            rows.push_back(r);
        }
    const auto g = compute_group_stats(rows);
    REQUIRE(g.kruskal_wallis);
    CHECK(g.kruskal_wallis->p_value == doctest::Approx(1.0));
    CHECK_FALSE(g.pooled_regression);
    for (const auto& m : g.mann_whitney) {
        REQUIRE(m);
        CHECK(m->p_value == 1.0);
    }
}

TEST_CASE("suite report text") {
    SUBCASE("empty suite is header only") {
        const auto tsv = format_suite_tsv(SuiteReport{});
        CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 1);
        CHECK(tsv.rfind("id\tk\tinputs", 0) == 0);
    }
    SUBCASE("92 rows, stable bytes, round trip") {
        const auto s = fake_suite();
        const auto tsv = format_suite_tsv(s);
        CHECK(data_rows(tsv) == 92);
        CHECK(format_suite_tsv(s) == tsv);
        CHECK(tsv.find("# kruskal_wallis") != std::string::npos);
        CHECK(tsv.find("# regression\tpooled") != std::string::npos);
        const auto back = parse_suite_tsv(tsv);
        CHECK(back.rows.size() == 92);
        CHECK(back.rows[49].error_category == "dataset");
        CHECK(back.rows[10].inputs == s.rows[10].inputs);
        CHECK(back.rows[10].accuracy == s.rows[10].accuracy);
        CHECK(format_suite_tsv(back).substr(tsv.find('\n')) == tsv.substr(tsv.find('\n')));

        const auto txt = format_suite_summary(s);
        CHECK(txt.find("pet    tmp    vap") != std::string::npos);
        CHECK(txt.find("error[dataset]") != std::string::npos);
        CHECK(txt.find("Kruskal-Wallis") != std::string::npos);

        testing::TempDir dir("report");
        write_report(s, dir / "suite.tsv");
        write_report(s, dir / "again.tsv");
        CHECK(testing::read_bytes(dir / "suite.tsv") == testing::read_bytes(dir / "again.tsv"));
        CHECK(std::filesystem::exists(dir / "suite.tsv.txt"));
    }
    CHECK_THROWS_AS(parse_suite_tsv("nope\n"), FormatError);
}

TEST_CASE("ablation rows follow the table order") {
    ExperimentSpec base;
    base.inputs = {VariableId::tmp};
    const auto a = ablation_specs(base);
    REQUIRE(a.size() == 4);
    CHECK(a[0].first == "Default");
    CHECK(a[1].first == "Seasonal variations only");
    CHECK(a[1].second.knockout == Knockout::seasonal_only);
    CHECK(a[2].first == "Interannual variations only");
    CHECK(a[2].second.knockout == Knockout::interannual_only);
    CHECK(a[3].first == "10-year training");
    CHECK(a[3].second.training_years == 10);
}

TEST_CASE("suite isolates failing experiments") {
    const auto s = synth_generate(load_synth_spec(VARENN_SOURCE_DIR "/configs/planted_trends.synth"));
    SuiteOptions o;
    o.ids = {1, 5, 6};
    o.c_t = 0.8;
    o.train.epochs = 1;
    o.train.net.conv1_filters = 2;
    o.train.net.conv2_filters = 2;
    o.train.net.fc1_units = 4;
    std::vector<int> seen;
    o.on_result = [&](const ExperimentResult& r) { seen.push_back(r.id); };
    const auto rep = run_suite(s.cube, o);
    REQUIRE(rep.rows.size() == 3);
    CHECK_FALSE(rep.rows[0].ok);  // cld is not in the cube
    CHECK(rep.rows[0].error_category == "validation");
    CHECK(rep.rows[1].ok);
    CHECK(rep.rows[2].ok);
    CHECK(seen.size() == 3);
    CHECK(rep.rows[2].confusion.n() == rep.rows[2].n_test);

    o.ids = {93};
    CHECK_THROWS_AS(run_suite(s.cube, o), ConfigError);
}

TEST_CASE("map rendering") {
    SUBCASE("projection") {
        CHECK(project(0, 0, 0.5) == std::pair<int, int>{360, 180});
        CHECK(project(89.9, -180, 0.5) == std::pair<int, int>{0, 0});
        CHECK(project(-90, 179.9, 0.5) == std::pair<int, int>{719, 359});
    }
    SUBCASE("palette lookup and errors") {
        std::vector<MapPoint> pts;
        for (int k = 0; k < 5; ++k) pts.push_back({10.0 * k, 20.0 * k, k, false});
        const auto img = render_map(pts, MapKind::classes, 1.0);
        CHECK(img.width == 360);
        CHECK(img.height == 180);
        for (const auto& p : pts) {
            const auto [x, y] = project(p.lat, p.lon, 1.0);
            CHECK(img.at(x, y) == class_palette()[static_cast<std::size_t>(p.category)]);
        }
        const auto err = render_map(pts, MapKind::errors, 1.0);
        std::size_t orange = 0, neutral = 0;
        for (int y = 0; y < err.height; ++y)
            for (int x = 0; x < err.width; ++x) {
                orange += err.at(x, y) == kMapError;
                neutral += err.at(x, y) == kMapNeutral;
            }
        CHECK(orange == 0);
        CHECK(neutral == 5);
        pts[2].error = true;
        const auto err2 = render_map(pts, MapKind::errors, 1.0);
        const auto [x2, y2] = project(pts[2].lat, pts[2].lon, 1.0);
        CHECK(err2.at(x2, y2) == kMapError);

        pts[0].category = 5;
        CHECK_THROWS_AS(render_map(pts, MapKind::classes), ValidationError);
        CHECK_THROWS_AS(render_map({}, MapKind::classes), ValidationError);
    }
    SUBCASE("png output is deterministic") {
        const std::vector<MapPoint> pts{{0, 0, 1, false}};
        testing::TempDir dir("map");
        write_map_png(render_map(pts, MapKind::classes, 2.0), dir / "a.png");
        write_map_png(render_map(pts, MapKind::classes, 2.0), dir / "b.png");
        CHECK(testing::read_bytes(dir / "a.png") == testing::read_bytes(dir / "b.png"));
    }
}
