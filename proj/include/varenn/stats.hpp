#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "varenn/climate.hpp"

namespace varenn {

/// counts[true][predicted].
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 5) : k_(classes), counts_(classes * classes, 0) {}

    static ConfusionMatrix from_labels(std::span<const int> truth, std::span<const int> predicted,
                                       std::size_t classes = 5);
    /// Row-major k×k counts.
    static ConfusionMatrix from_counts(std::size_t classes, std::span<const std::size_t> counts);

    void add(int truth, int predicted, std::size_t count = 1);
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
    std::size_t classes() const { return k_; }
    std::size_t n() const;
    std::size_t row_sum(std::size_t i) const;
    std::size_t col_sum(std::size_t j) const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::size_t> counts_;
};

/// trace / n. Throws StatisticsError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

enum class KappaWeights { quadratic, linear };
const char* to_string(KappaWeights w);

/// 1 - sum(w o) / sum(w e), w_ij = ((i-j)/(k-1))^2 or |i-j|/(k-1), o observed and e
/// marginal-product proportions. Throws StatisticsError when n = 0 or the expected
/// disagreement vanishes (all mass on one class in both margins).
double weighted_kappa(const ConfusionMatrix& cm, KappaWeights weights = KappaWeights::quadratic);

enum class TestMethod { kruskal_wallis, mann_whitney_u, ols_slope_t };
enum class Adjustment { none, bonferroni };
const char* to_string(TestMethod m);
const char* to_string(Adjustment a);

struct StatTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    TestMethod method = TestMethod::kruskal_wallis;
    Adjustment adjustment = Adjustment::none;
    bool exact = false;  ///< p from full permutation enumeration rather than the asymptotic law
};

/// Largest number of label assignments for which p-values are enumerated exactly.
inline constexpr double kExactPermutationLimit = 1e6;

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

/// H with tie correction. p is exact when the assignment count is at most
/// kExactPermutationLimit, otherwise chi-square with groups-1 df.
/// All values equal gives H = 0, p = 1. Throws StatisticsError for < 2 groups or an empty group.
StatTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// U of `a` (pairs with a > b, ties count 1/2). Two-sided p is exact for small samples,
/// otherwise the tie-corrected normal approximation with continuity correction.
/// p is multiplied by `comparisons` (Bonferroni) and clamped to 1.
StatTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b, int comparisons = 1);

/// sqrt(mean((z1 - z2)^2)) over entries where both variables are present; each variable is
/// standardized (population sd) over its own non-missing entries. A constant variable
/// standardizes to 0. Throws DomainError when the variables share no entries.
double variable_distance(const ClimateCube& cube, VariableId v1, VariableId v2);

struct SimilarityMatrix {
    std::array<std::array<double, kVariableCount>, kVariableCount> distances{};
    std::array<bool, kVariableCount> present{};

    /// Throws ValidationError if either variable is absent.
    double at(VariableId a, VariableId b) const;
};

SimilarityMatrix similarity_matrix(const ClimateCube& cube);

/// Mean distance from the target to each input.
double experiment_similarity(VariableId target, std::span<const VariableId> inputs, const SimilarityMatrix& sim);

struct OlsResult {
    double slope = 0.0;
    double intercept = 0.0;
    double p_value = 1.0;      ///< two-sided t-test of slope = 0, n-2 df
    double t_statistic = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

/// Throws ValidationError on size mismatch or n < 3, StatisticsError on constant x.
OlsResult ols_regression(std::span<const double> x, std::span<const double> y);

}  // namespace varenn
