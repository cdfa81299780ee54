#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "varenn/dataset.hpp"
#include "varenn/experiment_spec.hpp"
#include "varenn/stats.hpp"
#include "varenn/trainer.hpp"

namespace varenn {

/// The 92 input combinations: ids 1-8 single variables, 9-36 pairs, 37-92 triples,
/// each block lexicographic in canonical variable order. Other fields come from `base`.
std::vector<ExperimentSpec> enumerate_combinations(Target target, const ExperimentSpec& base = {});

struct ExperimentResult {
    int id = 0;
    std::vector<VariableId> inputs;
    Knockout knockout = Knockout::none;
    int training_years = 30;
    bool ok = false;
    std::string error_category;  ///< set when !ok
    std::string error;
    ConfusionMatrix confusion{kClasses};
    double accuracy = 0.0;
    double kappa = 0.0;          ///< NaN when undefined on the test split
    double similarity = 0.0;     ///< NaN when no similarity matrix was supplied
    std::size_t n_train = 0, n_validation = 0, n_test = 0;
};

struct ExperimentRun {
    ExperimentResult result;
    Dataset dataset;
    TrainResult trained;
    std::vector<std::size_t> test_records;  ///< manifest positions of the test split
    Prediction test_prediction;             ///< parallel to test_records
};

/// build_dataset -> train -> predict on the test split -> evaluate. Stage errors propagate.
ExperimentRun run_experiment(const ClimateCube& cube, const ExperimentSpec& spec, const TrainConfig& cfg,
                             const SimilarityMatrix* sim = nullptr, int workers = 1);

struct GroupStats {
    std::optional<StatTestResult> kruskal_wallis;               ///< over the 1/2/3-VAR accuracy groups
    std::array<std::optional<StatTestResult>, 3> mann_whitney;  ///< 1v2, 1v3, 2v3, Bonferroni x3
    std::array<std::optional<OlsResult>, 3> regression;         ///< accuracy ~ similarity per k-VAR group
    std::optional<OlsResult> pooled_regression;                 ///< all successful experiments
};

struct SuiteReport {
    Target target = Target::TMP;
    double c_t = 0.0;
    std::uint64_t seed = 1;
    std::vector<ExperimentResult> rows;  ///< ordered by id
    GroupStats stats;
};

struct SuiteOptions {
    Target target = Target::TMP;
    double c_t = 0.0;
    std::uint64_t seed = 1;
    ScalingMode scaling = ScalingMode::global;
    TrainConfig train;            ///< its seed is replaced by `seed`
    std::array<double, 3> split_fractions{0.75, 0.20, 0.05};  ///< train, validation, test
    std::vector<int> ids;         ///< subset of 1..92; empty runs all
    int parallel_experiments = 1;
    int workers = 1;              ///< per-experiment gradient and encoding fan-out
    std::optional<std::filesystem::path> output_dir;  ///< per-experiment manifest, checkpoint and log
    std::function<void(const ExperimentResult&)> on_result;
};

/// Group statistics over successful rows. Statistics that cannot be formed are left empty.
GroupStats compute_group_stats(const std::vector<ExperimentResult>& rows);

/// Runs the selected combinations; a failing experiment is recorded and the suite continues.
SuiteReport run_suite(const ClimateCube& cube, const SuiteOptions& options);

struct AblationRow {
    std::string name;
    ExperimentResult result;
};

struct AblationReport {
    ExperimentSpec base;
    std::vector<AblationRow> rows;
};

/// Default, seasonal-only, interannual-only and 10-year-training variants of `base`, in that order.
std::vector<std::pair<std::string, ExperimentSpec>> ablation_specs(const ExperimentSpec& base);
AblationReport run_ablations(const ClimateCube& cube, const ExperimentSpec& base, const TrainConfig& cfg,
                             const SimilarityMatrix* sim = nullptr, int workers = 1);

// Reports ------------------------------------------------------------------

/// Tab-separated rows (one per experiment, header first) followed by '#' group-statistic lines.
/// An empty suite gives the header line only.
std::string format_suite_tsv(const SuiteReport& suite);
/// Rows and group statistics parsed back from format_suite_tsv output.
SuiteReport parse_suite_tsv(std::string_view text);
/// Fixed-width table: id, variables, accuracy, kappa, similarity, then group statistics.
std::string format_suite_summary(const SuiteReport& suite);
/// Writes `path` (TSV) and `path` with ".txt" appended (summary).
void write_report(const SuiteReport& suite, const std::filesystem::path& path);

std::string format_ablations(const AblationReport& report);

}  // namespace varenn
