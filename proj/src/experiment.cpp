#include "varenn/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>

#include "binary_io.hpp"
#include "varenn/error.hpp"

namespace varenn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string experiment_stem(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "exp_%02d", id);
    return buf;
}

ExperimentResult failed_result(const ExperimentSpec& spec, std::string category, std::string message) {
    ExperimentResult r;
    r.id = spec.id;
    r.inputs = spec.inputs;
    r.knockout = spec.knockout;
    r.training_years = spec.training_years;
    r.ok = false;
    r.error_category = std::move(category);
    r.error = std::move(message);
    r.kappa = kNaN;
    r.similarity = kNaN;
    return r;
}

template <typename F>
ExperimentResult guarded(const ExperimentSpec& spec, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        return failed_result(spec, std::string(to_string(e.category())), e.what());
    } catch (const std::exception& e) {
        return failed_result(spec, "internal", e.what());
    }
}

}  // namespace

std::vector<ExperimentSpec> enumerate_combinations(Target target, const ExperimentSpec& base) {
    std::vector<ExperimentSpec> out;
    out.reserve(92);
    auto push = [&](std::vector<VariableId> inputs) {
        ExperimentSpec s = base;
        s.id = static_cast<int>(out.size()) + 1;
        s.target = target;
        s.inputs = std::move(inputs);
        out.push_back(std::move(s));
    };
    const int n = kVariableCount;
    for (int a = 0; a < n; ++a) push({variable_from_index(a)});
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) push({variable_from_index(a), variable_from_index(b)});
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            for (int c = b + 1; c < n; ++c) push({variable_from_index(a), variable_from_index(b), variable_from_index(c)});
    return out;
}

ExperimentRun run_experiment(const ClimateCube& cube, const ExperimentSpec& spec, const TrainConfig& cfg,
                             const SimilarityMatrix* sim, int workers) {
    spec.validate();
    ExperimentRun run;
    ExperimentResult& r = run.result;
    r.id = spec.id;
    r.inputs = spec.inputs;
    r.knockout = spec.knockout;
    r.training_years = spec.training_years;

    run.dataset = build_dataset(cube, spec, workers);
    const DatasetManifest& m = run.dataset.manifest;
    TrainConfig c = spec.train ? *spec.train : cfg;
    if (workers > c.workers) c.workers = workers;
    run.trained = train(m, run.dataset.images, c);

    std::vector<float> store;
    const LabeledImages test = gather_split(m, run.dataset.images, Split::test, store);
    if (test.size() == 0) throw DatasetError("experiment " + std::to_string(spec.id) + ": empty test split");
    run.test_records = m.indices(Split::test);
    run.test_prediction = predict(run.trained.model, test.images, c.quantize_input);

    r.confusion = ConfusionMatrix::from_labels(test.labels, run.test_prediction.labels, kClasses);
    r.accuracy = accuracy(r.confusion);
    try {
        r.kappa = weighted_kappa(r.confusion);
    } catch (const StatisticsError&) {
        r.kappa = kNaN;
    }
    r.similarity = sim ? experiment_similarity(target_variable(spec.target), spec.inputs, *sim) : kNaN;
    r.n_train = m.count(Split::train);
    r.n_validation = m.count(Split::validation);
    r.n_test = m.count(Split::test);
    r.ok = true;
    return run;
}

GroupStats compute_group_stats(const std::vector<ExperimentResult>& rows) {
    GroupStats g;
    std::array<std::vector<double>, 3> acc;
    std::array<std::vector<double>, 3> sim;
    std::vector<double> all_acc, all_sim;
    for (const auto& r : rows) {
        if (!r.ok || r.inputs.empty() || r.inputs.size() > 3) continue;
        const std::size_t k = r.inputs.size() - 1;
        acc[k].push_back(r.accuracy);
        if (std::isfinite(r.similarity)) {
            sim[k].push_back(r.similarity);
            all_sim.push_back(r.similarity);
            all_acc.push_back(r.accuracy);
        }
    }
    std::vector<std::vector<double>> groups;
    for (const auto& a : acc)
        if (!a.empty()) groups.push_back(a);
    if (groups.size() >= 2) g.kruskal_wallis = kruskal_wallis(groups);
    const std::array<std::pair<std::size_t, std::size_t>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs[p];
        if (!acc[i].empty() && !acc[j].empty()) g.mann_whitney[p] = mann_whitney_u(acc[i], acc[j], 3);
    }
    auto regress = [](const std::vector<double>& x, const std::vector<double>& y) -> std::optional<OlsResult> {
        try {
            return ols_regression(x, y);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> y;
        for (const auto& r : rows)
            if (r.ok && r.inputs.size() == k + 1 && std::isfinite(r.similarity)) y.push_back(r.accuracy);
        g.regression[k] = regress(sim[k], y);
    }
    g.pooled_regression = regress(all_sim, all_acc);
    return g;
}

SuiteReport run_suite(const ClimateCube& cube, const SuiteOptions& options) {
    ExperimentSpec base;
    base.target = options.target;
    base.c_t = options.c_t;
    base.seed = options.seed;
    base.scaling = options.scaling;
    base.split_fractions = options.split_fractions;
    auto specs = enumerate_combinations(options.target, base);
    if (!options.ids.empty()) {
        std::vector<ExperimentSpec> chosen;
        for (const auto& s : specs)
            if (std::find(options.ids.begin(), options.ids.end(), s.id) != options.ids.end()) chosen.push_back(s);
        for (int id : options.ids)
            if (id < 1 || id > static_cast<int>(specs.size()))
                throw ConfigError("experiment id " + std::to_string(id) + " is outside 1..92");
        specs = std::move(chosen);
    }

    std::optional<SimilarityMatrix> sim;
    try {
        sim = similarity_matrix(cube);
    } catch (const Error&) {
        sim.reset();
    }

    TrainConfig cfg = options.train;
    cfg.seed = options.seed;
    if (options.output_dir) std::filesystem::create_directories(*options.output_dir);

    SuiteReport report;
    report.target = options.target;
    report.c_t = options.c_t;
    report.seed = options.seed;
    report.rows.resize(specs.size());

    std::mutex callback_mutex;
    auto run_one = [&](std::size_t i) {
        const ExperimentSpec& spec = specs[i];
        report.rows[i] = guarded(spec, [&] {
            ExperimentRun run = run_experiment(cube, spec, cfg, sim ? &*sim : nullptr, options.workers);
            if (options.output_dir) {
                const auto stem = *options.output_dir / experiment_stem(spec.id);
                save_manifest(run.dataset.manifest, stem.string() + ".manifest");
                save_model(run.trained.model, stem.string() + ".ckpt");
                detail::write_text_file(stem.string() + ".log", run.trained.log.format());
            }
            return run.result;
        });
        if (options.on_result) {
            std::lock_guard lock(callback_mutex);
            options.on_result(report.rows[i]);
        }
    };

    const std::size_t threads =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(options.parallel_experiments, 1)), specs.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < specs.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < specs.size(); i = next++) run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    report.stats = compute_group_stats(report.rows);
    return report;
}

std::vector<std::pair<std::string, ExperimentSpec>> ablation_specs(const ExperimentSpec& base) {
    std::vector<std::pair<std::string, ExperimentSpec>> out;
    ExperimentSpec s = base;
    s.knockout = Knockout::none;
    s.training_years = 30;
    out.emplace_back("Default", s);
    s.knockout = Knockout::seasonal_only;
    out.emplace_back("Seasonal variations only", s);
    s.knockout = Knockout::interannual_only;
    out.emplace_back("Interannual variations only", s);
    s.knockout = Knockout::none;
    s.training_years = 10;
    out.emplace_back("10-year training", s);
    return out;
}

AblationReport run_ablations(const ClimateCube& cube, const ExperimentSpec& base, const TrainConfig& cfg,
                             const SimilarityMatrix* sim, int workers) {
    AblationReport report;
    report.base = base;
    for (const auto& [name, spec] : ablation_specs(base)) {
        ExperimentResult r =
            guarded(spec, [&] { return run_experiment(cube, spec, cfg, sim, workers).result; });
        report.rows.push_back({name, std::move(r)});
    }
    return report;
}

}  // namespace varenn
