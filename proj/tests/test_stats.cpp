#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "varenn/error.hpp"
#include "varenn/stats.hpp"

using namespace varenn;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::size_t>>& rows) {
    std::vector<std::size_t> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return ConfusionMatrix::from_counts(rows.size(), flat);
}

std::vector<std::vector<double>> as_double(const ConfusionMatrix& cm) {
    std::vector<std::vector<double>> out(cm.classes(), std::vector<double>(cm.classes()));
    for (std::size_t i = 0; i < cm.classes(); ++i)
        for (std::size_t j = 0; j < cm.classes(); ++j) out[i][j] = static_cast<double>(cm.at(i, j));
    return out;
}

}  // namespace

TEST_CASE("confusion matrix and accuracy") {
    const std::vector<int> t{0, 1, 2, 2, 4}, p{0, 1, 2, 3, 0};
    const auto cm = ConfusionMatrix::from_labels(t, p);
    CHECK(cm.n() == 5);
    CHECK(cm.at(2, 3) == 1);
    CHECK(cm.row_sum(2) == 2);
    CHECK(cm.col_sum(0) == 2);
    CHECK(accuracy(cm) == doctest::Approx(0.6));

    CHECK(accuracy(from_rows({{3, 0}, {0, 4}})) == 1.0);
    CHECK(accuracy(from_rows({{0, 3}, {4, 0}})) == 0.0);
    auto padded = ConfusionMatrix(5);
    padded.add(0, 0, 3);
    padded.add(0, 1, 1);
    padded.add(1, 0, 1);
    padded.add(1, 1, 3);
    CHECK(accuracy(padded) == 0.75);

    CHECK_THROWS_AS(accuracy(ConfusionMatrix(5)), StatisticsError);
    CHECK_THROWS_AS(padded.add(5, 0), DomainError);
}

TEST_CASE("weighted kappa") {
    SUBCASE("perfect and independent") {
        CHECK(weighted_kappa(from_rows({{5, 0, 0}, {0, 3, 0}, {0, 0, 9}})) == doctest::Approx(1.0));
        // o = outer product of marginals (2,1,1) x (1,2,3)
        const auto ind = from_rows({{2, 4, 6}, {1, 2, 3}, {1, 2, 3}});
        CHECK(weighted_kappa(ind) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(weighted_kappa(ind, KappaWeights::linear) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("2x2 against the hand formula") {
        const auto cm = from_rows({{10, 2}, {3, 5}});
        // with k=2 both weightings are the unweighted disagreement: po=0.75, pe=0.53
        CHECK(weighted_kappa(cm) == doctest::Approx((0.75 - 0.53) / (1 - 0.53)).epsilon(1e-12));
        CHECK(weighted_kappa(cm) == doctest::Approx(oracle::hand_kappa(as_double(cm), true)).epsilon(1e-12));
    }
    SUBCASE("random 5x5 against the hand formula; scale invariance") {
        std::mt19937 gen(2);
        std::uniform_int_distribution<std::size_t> u(0, 20);
        for (int rep = 0; rep < 50; ++rep) {
            ConfusionMatrix cm(5);
            ConfusionMatrix scaled(5);
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) {
                    const auto c = u(gen);
                    cm.add(i, j, c);
                    scaled.add(i, j, 7 * c);
                }
            const auto d = as_double(cm);
            CHECK(weighted_kappa(cm) == doctest::Approx(oracle::hand_kappa(d, true)).epsilon(1e-12));
            CHECK(weighted_kappa(cm, KappaWeights::linear) ==
                  doctest::Approx(oracle::hand_kappa(d, false)).epsilon(1e-12));
            CHECK(weighted_kappa(scaled) == doctest::Approx(weighted_kappa(cm)).epsilon(1e-12));
        }
    }
    SUBCASE("degenerate") {
        CHECK_THROWS_AS(weighted_kappa(ConfusionMatrix(5)), StatisticsError);
        auto one = ConfusionMatrix(5);
        one.add(2, 2, 10);
        CHECK_THROWS_AS(weighted_kappa(one), StatisticsError);
    }
}

TEST_CASE("midranks match naive ranks") {
    std::mt19937 gen(4);
    std::uniform_int_distribution<int> u(0, 6);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> v(15);
        for (auto& x : v) x = u(gen);
        CHECK(midranks(v) == oracle::naive_ranks(v));
    }
}

TEST_CASE("Kruskal-Wallis") {
    SUBCASE("exchangeable groups") {
        const auto r = kruskal_wallis({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
        CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(r.p_value == doctest::Approx(1.0));
    }
    SUBCASE("separated groups") {
        const std::vector<std::vector<double>> g{{1, 2, 3}, {10, 11, 12}, {20, 21, 22}};
        const auto r = kruskal_wallis(g);
        CHECK(r.p_value < 0.05);
        CHECK(oracle::permutation_kw_p(g) < 0.05);
        CHECK(r.p_value == doctest::Approx(oracle::permutation_kw_p(g)).epsilon(1e-12));
    }
    SUBCASE("all equal") {
        const auto r = kruskal_wallis({{4, 4}, {4, 4, 4}});
        CHECK(r.statistic == 0.0);
        CHECK(r.p_value == 1.0);
    }
    SUBCASE("random 3x5 H against naive ranking") {
        std::mt19937 gen(9);
        std::uniform_int_distribution<int> u(0, 9);
        for (int rep = 0; rep < 30; ++rep) {
            std::vector<std::vector<double>> g(3, std::vector<double>(5));
            for (auto& grp : g)
                for (auto& x : grp) x = u(gen);
            CHECK(kruskal_wallis(g).statistic == doctest::Approx(oracle::naive_kw_h(g)).epsilon(1e-12));
        }
    }
    SUBCASE("asymptotic path on larger groups") {
        std::mt19937 gen(1);
        std::normal_distribution<double> nd;
        std::vector<std::vector<double>> g(3, std::vector<double>(30));
        for (auto& grp : g)
            for (auto& x : grp) x = nd(gen);
        const auto r = kruskal_wallis(g);
        CHECK_FALSE(r.exact);
        CHECK(r.p_value > 0.0);
        CHECK(r.p_value <= 1.0);
    }
    CHECK_THROWS_AS(kruskal_wallis({{1, 2}}), StatisticsError);
    CHECK_THROWS_AS(kruskal_wallis({{1, 2}, {}}), StatisticsError);
}

TEST_CASE("Mann-Whitney U") {
    SUBCASE("complete separation") {
        const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
        CHECK(mann_whitney_u(a, b).statistic == 0.0);
        CHECK(mann_whitney_u(b, a).statistic == 9.0);
    }
    SUBCASE("identical samples") {
        const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
        CHECK(mann_whitney_u(a, b).p_value == doctest::Approx(1.0));
    }
    SUBCASE("permutation oracle, |a| = |b| = 4") {
        std::mt19937 gen(12);
        std::uniform_int_distribution<int> u(0, 12);
        for (int rep = 0; rep < 40; ++rep) {
            std::vector<double> a(4), b(4);
            for (auto& x : a) x = u(gen);
            for (auto& x : b) x = u(gen) + (rep % 3);
            const auto r = mann_whitney_u(a, b);
            CHECK(r.statistic == oracle::naive_u(a, b));
            CHECK(std::abs(r.p_value - oracle::permutation_mwu_p(a, b)) <= 0.02);
        }
    }
    SUBCASE("normal approximation and Bonferroni") {
        std::mt19937 gen(3);
        std::normal_distribution<double> nd;
        std::vector<double> a(40), b(40);
        for (auto& x : a) x = nd(gen);
        for (auto& x : b) x = nd(gen) + 0.3;
        const auto raw = mann_whitney_u(a, b, 1);
        const auto adj = mann_whitney_u(a, b, 3);
        CHECK_FALSE(raw.exact);
        CHECK(adj.p_value == doctest::Approx(std::min(1.0, 3 * raw.p_value)));
        CHECK(adj.p_value >= raw.p_value);
        CHECK(adj.adjustment == Adjustment::bonferroni);
    }
}

TEST_CASE("rank tests are invariant under monotone transforms") {
    std::mt19937 gen(21);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::vector<double>> g(3, std::vector<double>(4)), h(3, std::vector<double>(4));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                g[i][j] = std::round(u(gen) * 2) / 2;
                h[i][j] = std::exp(3 * g[i][j]) - 7;
            }
        const auto a = kruskal_wallis(g), b = kruskal_wallis(h);
        CHECK(a.statistic == doctest::Approx(b.statistic).epsilon(1e-12));
        CHECK(a.p_value == doctest::Approx(b.p_value).epsilon(1e-12));
        const auto m1 = mann_whitney_u(g[0], g[1]), m2 = mann_whitney_u(h[0], h[1]);
        CHECK(m1.statistic == m2.statistic);
        CHECK(m1.p_value == doctest::Approx(m2.p_value).epsilon(1e-12));
    }
}

TEST_CASE("variable distance and similarity matrix") {
    std::vector<float> values;
    std::mt19937 gen(8);
    std::normal_distribution<float> nd;
    const std::size_t cells = 6;
    const int months = 24;
    std::vector<float> base(static_cast<std::size_t>(months) * cells);
    for (auto& v : base) v = nd(gen);
    // cld = base, pre = 3*base + 2, tmp = noise
    for (float v : base) values.push_back(v);
    for (float v : base) values.push_back(3 * v + 2);
    for (std::size_t i = 0; i < base.size(); ++i) values.push_back(i == 5 ? kMissing : nd(gen));
    std::vector<GridCell> grid;
    for (std::size_t c = 0; c < cells; ++c) grid.push_back({static_cast<std::int64_t>(c), 0, 0});
    ClimateCube cube({VariableId::cld, VariableId::pre, VariableId::tmp}, months, 1901, grid, values);

    CHECK(variable_distance(cube, VariableId::cld, VariableId::cld) == 0.0);
    CHECK(variable_distance(cube, VariableId::cld, VariableId::pre) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(variable_distance(cube, VariableId::cld, VariableId::tmp) ==
          doctest::Approx(oracle::naive_distance(cube, 0, 2)).epsilon(1e-9));

    const auto sim = similarity_matrix(cube);
    for (VariableId a : cube.variables())
        for (VariableId b : cube.variables()) {
            CHECK(sim.at(a, b) == sim.at(b, a));
            CHECK(sim.at(a, b) >= 0.0);
        }
    CHECK(sim.at(VariableId::tmp, VariableId::tmp) == 0.0);
    CHECK_THROWS_AS(sim.at(VariableId::vap, VariableId::tmp), ValidationError);

    const std::vector<VariableId> self{VariableId::tmp};
    CHECK(experiment_similarity(VariableId::tmp, self, sim) == 0.0);
    const std::vector<VariableId> one{VariableId::cld};
    CHECK(experiment_similarity(VariableId::tmp, one, sim) == sim.at(VariableId::tmp, VariableId::cld));
    const std::vector<VariableId> two{VariableId::cld, VariableId::pre};
    CHECK(experiment_similarity(VariableId::tmp, two, sim) ==
          doctest::Approx((sim.at(VariableId::tmp, VariableId::cld) + sim.at(VariableId::tmp, VariableId::pre)) / 2));

    SUBCASE("random fields against the double loop") {
        for (std::uint32_t seed = 1; seed <= 5; ++seed) {
            const auto c = testing::random_cube({VariableId::dtr, VariableId::frs}, 3, 9, seed, 0.1);
            CHECK(variable_distance(c, VariableId::dtr, VariableId::frs) ==
                  doctest::Approx(oracle::naive_distance(c, 0, 1)).epsilon(1e-9));
        }
    }
}

TEST_CASE("OLS regression") {
    SUBCASE("exact line") {
        std::vector<double> x, y;
        for (int i = 0; i < 10; ++i) {
            x.push_back(i);
            y.push_back(2 * i + 1);
        }
        const auto r = ols_regression(x, y);
        CHECK(r.slope == doctest::Approx(2.0));
        CHECK(r.intercept == doctest::Approx(1.0));
        CHECK(r.p_value < 1e-12);
        CHECK(r.r_squared == doctest::Approx(1.0));
    }
    SUBCASE("normal equations on random data") {
        std::mt19937 gen(5);
        std::normal_distribution<double> nd;
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> x(12), y(12);
            for (std::size_t i = 0; i < 12; ++i) {
                x[i] = nd(gen) * 3 + 1;
                y[i] = 0.5 * x[i] + nd(gen);
            }
            const auto r = ols_regression(x, y);
            const auto ne = oracle::normal_equations(x, y);
            CHECK(std::abs(r.slope - ne.slope) <= 1e-9 * std::max(1.0, std::abs(ne.slope)));
            CHECK(std::abs(r.intercept - ne.intercept) <= 1e-9 * std::max(1.0, std::abs(ne.intercept)));
        }
    }
    SUBCASE("rejection rate under the null") {
        std::mt19937 gen(6);
        std::normal_distribution<double> nd;
        std::vector<double> x(20), y(20);
        for (std::size_t i = 0; i < 20; ++i) x[i] = static_cast<double>(i);
        int rejected = 0;
        for (int rep = 0; rep < 1000; ++rep) {
            for (auto& v : y) v = nd(gen);
            const auto r = ols_regression(x, y);
            CHECK(r.p_value >= 0.0);
            CHECK(r.p_value <= 1.0);
            rejected += r.p_value < 0.05;
        }
        CHECK(rejected >= 30);
        CHECK(rejected <= 70);
    }
    const std::vector<double> c{1, 1, 1}, y{1, 2, 3}, two{1, 2};
    CHECK_THROWS_AS(ols_regression(c, y), StatisticsError);
    CHECK_THROWS_AS(ols_regression(two, two), ValidationError);
    CHECK_THROWS_AS(ols_regression(y, two), ValidationError);
}
