#include "varenn/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "varenn/error.hpp"

namespace varenn {

namespace {

// Relative slack when comparing a permuted statistic with the observed one.
constexpr double kTieSlack = 1e-9;

double multinomial(std::span<const std::size_t> sizes) {
    double total = 0.0;
    double log_count = 0.0;
    for (std::size_t s : sizes) {
        for (std::size_t i = 1; i <= s; ++i) {
            total += 1.0;
            log_count += std::log(total) - std::log(static_cast<double>(i));
        }
    }
    return std::exp(log_count);
}

double tie_term(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        const double t = static_cast<double>(j - i);
        sum += t * t * t - t;
        i = j;
    }
    return sum;
}

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

ConfusionMatrix ConfusionMatrix::from_labels(std::span<const int> truth, std::span<const int> predicted,
                                             std::size_t classes) {
    if (truth.size() != predicted.size()) throw ValidationError("truth and prediction lengths differ");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t classes, std::span<const std::size_t> counts) {
    if (counts.size() != classes * classes) throw ValidationError("confusion counts must be k x k");
    ConfusionMatrix cm(classes);
    std::copy(counts.begin(), counts.end(), cm.counts_.begin());
    return cm;
}

void ConfusionMatrix::add(int truth, int predicted, std::size_t count) {
    const auto k = static_cast<int>(k_);
    if (truth < 0 || truth >= k || predicted < 0 || predicted >= k)
        throw DomainError("class index outside [0, " + std::to_string(k_) + ")");
    counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)] += count;
}

std::size_t ConfusionMatrix::n() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::row_sum(std::size_t i) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < k_; ++j) s += at(i, j);
    return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t j) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, j);
    return s;
}

double accuracy(const ConfusionMatrix& cm) {
    const std::size_t n = cm.n();
    if (n == 0) throw StatisticsError("accuracy of an empty confusion matrix");
    std::size_t diag = 0;
    for (std::size_t i = 0; i < cm.classes(); ++i) diag += cm.at(i, i);
    return static_cast<double>(diag) / static_cast<double>(n);
}

const char* to_string(KappaWeights w) { return w == KappaWeights::quadratic ? "quadratic" : "linear"; }

double weighted_kappa(const ConfusionMatrix& cm, KappaWeights weights) {
    const std::size_t k = cm.classes();
    const double n = static_cast<double>(cm.n());
    if (n == 0) throw StatisticsError("weighted kappa of an empty confusion matrix");
    if (k < 2) throw StatisticsError("weighted kappa needs at least two classes");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double row = static_cast<double>(cm.row_sum(i)) / n;
        for (std::size_t j = 0; j < k; ++j) {
            const double d = std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(k - 1);
            const double w = weights == KappaWeights::quadratic ? d * d : d;
            num += w * static_cast<double>(cm.at(i, j)) / n;
            den += w * row * static_cast<double>(cm.col_sum(j)) / n;
        }
    }
    if (den <= 0.0) throw StatisticsError("weighted kappa undefined: expected disagreement is zero");
    return 1.0 - num / den;
}

const char* to_string(TestMethod m) {
    switch (m) {
        case TestMethod::kruskal_wallis: return "kruskal_wallis";
        case TestMethod::mann_whitney_u: return "mann_whitney_u";
        case TestMethod::ols_slope_t: return "ols_slope_t";
    }
    return "kruskal_wallis";
}

const char* to_string(Adjustment a) { return a == Adjustment::none ? "none" : "bonferroni"; }

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
        i = j;
    }
    return ranks;
}

StatTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw StatisticsError("Kruskal-Wallis needs at least two groups");
    std::vector<double> pooled;
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> labels;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw StatisticsError("Kruskal-Wallis group " + std::to_string(g) + " is empty");
        for (double v : groups[g]) {
            if (!std::isfinite(v)) throw StatisticsError("Kruskal-Wallis input is not finite");
            pooled.push_back(v);
            labels.push_back(g);
        }
        sizes.push_back(groups[g].size());
    }
    const double n = static_cast<double>(pooled.size());
    const auto ranks = midranks(pooled);

    StatTestResult res;
    res.method = TestMethod::kruskal_wallis;
    const double correction = 1.0 - tie_term(pooled) / (n * n * n - n);
    if (correction <= 0.0) {
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.exact = true;
        return res;
    }

    auto rank_score = [&](std::span<const std::size_t> assign) {
        std::vector<double> sums(sizes.size(), 0.0);
        for (std::size_t i = 0; i < assign.size(); ++i) sums[assign[i]] += ranks[i];
        double s = 0.0;
        for (std::size_t g = 0; g < sizes.size(); ++g) s += sums[g] * sums[g] / static_cast<double>(sizes[g]);
        return s;
    };
    const double observed = rank_score(labels);
    const double h = (12.0 / (n * (n + 1.0)) * observed - 3.0 * (n + 1.0)) / correction;
    res.statistic = std::max(h, 0.0);

    if (multinomial(sizes) <= kExactPermutationLimit) {
        std::vector<std::size_t> assign = labels;
        std::sort(assign.begin(), assign.end());
        std::size_t total = 0, extreme = 0;
        do {
            ++total;
            if (rank_score(assign) >= observed - kTieSlack * std::abs(observed)) ++extreme;
        } while (std::next_permutation(assign.begin(), assign.end()));
        res.p_value = static_cast<double>(extreme) / static_cast<double>(total);
        res.exact = true;
    } else {
        boost::math::chi_squared dist(static_cast<double>(groups.size() - 1));
        res.p_value = clamp01(boost::math::cdf(boost::math::complement(dist, res.statistic)));
    }
    return res;
}

StatTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, int comparisons) {
    if (a.empty() || b.empty()) throw StatisticsError("Mann-Whitney U needs two non-empty samples");
    if (comparisons < 1) throw ConfigError("Bonferroni comparison count must be at least 1");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    for (double v : pooled)
        if (!std::isfinite(v)) throw StatisticsError("Mann-Whitney input is not finite");
    const double m = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double n = m + nb;
    const auto ranks = midranks(pooled);

    auto u_of = [&](std::span<const std::uint8_t> in_a) {
        double r = 0.0;
        for (std::size_t i = 0; i < in_a.size(); ++i)
            if (in_a[i]) r += ranks[i];
        return r - m * (m + 1.0) / 2.0;
    };
    std::vector<std::uint8_t> membership(pooled.size(), 0);
    std::fill(membership.begin(), membership.begin() + static_cast<std::ptrdiff_t>(a.size()), 1);
    const double u = u_of(membership);
    const double mu = m * nb / 2.0;
    const double observed_gap = std::abs(u - mu);

    StatTestResult res;
    res.method = TestMethod::mann_whitney_u;
    res.statistic = u;
    const std::array<std::size_t, 2> sizes{a.size(), b.size()};
    double p;
    if (multinomial(sizes) <= kExactPermutationLimit) {
        std::vector<std::uint8_t> assign(pooled.size(), 0);
        std::fill(assign.end() - static_cast<std::ptrdiff_t>(a.size()), assign.end(), 1);
        std::size_t total = 0, extreme = 0;
        do {
            ++total;
            if (std::abs(u_of(assign) - mu) >= observed_gap - kTieSlack * std::max(1.0, observed_gap)) ++extreme;
        } while (std::next_permutation(assign.begin(), assign.end()));
        p = static_cast<double>(extreme) / static_cast<double>(total);
        res.exact = true;
    } else {
        const double var = m * nb / 12.0 * ((n + 1.0) - tie_term(pooled) / (n * (n - 1.0)));
        if (var <= 0.0) {
            p = 1.0;
        } else {
            const double z = std::max(observed_gap - 0.5, 0.0) / std::sqrt(var);
            p = std::erfc(z / std::sqrt(2.0));
        }
    }
    if (comparisons > 1) {
        res.adjustment = Adjustment::bonferroni;
        p *= comparisons;
    }
    res.p_value = clamp01(p);
    return res;
}

double variable_distance(const ClimateCube& cube, VariableId v1, VariableId v2) {
    const std::size_t s1 = cube.require_slot(v1), s2 = cube.require_slot(v2);
    const std::size_t per_var = static_cast<std::size_t>(cube.n_months()) * cube.n_cells();
    const auto vals = cube.values();
    const std::span<const float> x = vals.subspan(s1 * per_var, per_var);
    const std::span<const float> y = vals.subspan(s2 * per_var, per_var);

    auto moments = [](std::span<const float> v) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (float f : v)
            if (!is_missing(f)) {
                sum += f;
                ++cnt;
            }
        const double mean = cnt ? sum / static_cast<double>(cnt) : 0.0;
        double ss = 0.0;
        for (float f : v)
            if (!is_missing(f)) ss += (f - mean) * (f - mean);
        const double sd = cnt ? std::sqrt(ss / static_cast<double>(cnt)) : 0.0;
        return std::pair{mean, sd};
    };
    const auto [m1, sd1] = moments(x);
    const auto [m2, sd2] = moments(y);

    double acc = 0.0;
    std::size_t common = 0;
    for (std::size_t i = 0; i < per_var; ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        const double z1 = sd1 > 0.0 ? (x[i] - m1) / sd1 : 0.0;
        const double z2 = sd2 > 0.0 ? (y[i] - m2) / sd2 : 0.0;
        acc += (z1 - z2) * (z1 - z2);
        ++common;
    }
    if (common == 0)
        throw DomainError("variables " + std::string(code_of(v1)) + " and " + std::string(code_of(v2)) +
                          " share no non-missing entries");
    return std::sqrt(acc / static_cast<double>(common));
}

double SimilarityMatrix::at(VariableId a, VariableId b) const {
    const auto i = static_cast<std::size_t>(a), j = static_cast<std::size_t>(b);
    if (!present[i] || !present[j])
        throw ValidationError("similarity matrix lacks " + std::string(code_of(present[i] ? b : a)));
    return distances[i][j];
}

SimilarityMatrix similarity_matrix(const ClimateCube& cube) {
    SimilarityMatrix s;
    const auto& vars = cube.variables();
    for (VariableId v : vars) s.present[static_cast<std::size_t>(v)] = true;
    for (std::size_t a = 0; a < vars.size(); ++a)
        for (std::size_t b = a + 1; b < vars.size(); ++b) {
            const double d = variable_distance(cube, vars[a], vars[b]);
            s.distances[static_cast<std::size_t>(vars[a])][static_cast<std::size_t>(vars[b])] = d;
            s.distances[static_cast<std::size_t>(vars[b])][static_cast<std::size_t>(vars[a])] = d;
        }
    return s;
}

double experiment_similarity(VariableId target, std::span<const VariableId> inputs, const SimilarityMatrix& sim) {
    if (inputs.empty()) throw ValidationError("experiment similarity needs at least one input");
    double sum = 0.0;
    for (VariableId v : inputs) sum += sim.at(target, v);
    return sum / static_cast<double>(inputs.size());
}

OlsResult ols_regression(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("regression inputs differ in length");
    const std::size_t n = x.size();
    if (n < 3) throw ValidationError("regression needs at least 3 points");
    const double dn = static_cast<double>(n);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / dn;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / dn;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw StatisticsError("degenerate regressor: x is constant");
    OlsResult r;
    r.n = n;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (r.intercept + r.slope * x[i]);
        sse += e * e;
    }
    r.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    const double se = std::sqrt(sse / (dn - 2.0) / sxx);
    if (se == 0.0) {
        r.t_statistic = r.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.slope);
        r.p_value = r.slope == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t_statistic = r.slope / se;
    boost::math::students_t dist(dn - 2.0);
    r.p_value = clamp01(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic))));
    return r;
}

}  // namespace varenn
