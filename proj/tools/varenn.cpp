// varenn: command-line driver for the encode / dataset / train / evaluate / suite pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "varenn/climate.hpp"
#include "varenn/dataset.hpp"
#include "varenn/encoder.hpp"
#include "varenn/error.hpp"
#include "varenn/experiment.hpp"
#include "varenn/render.hpp"
#include "varenn/stats.hpp"
#include "varenn/trainer.hpp"

namespace fs = std::filesystem;
using namespace varenn;

namespace {

struct TrainArgs {
    TrainConfig cfg;
    std::string precision = "real32";
    std::string activation = "relu";

    TrainConfig resolve() const {
        TrainConfig c = cfg;
        c.precision = parse_precision(precision);
        c.net.activation = parse_activation(activation);
        c.validate();
        return c;
    }
};

void add_train_options(CLI::App* app, TrainArgs& t) {
    app->add_option("--epochs", t.cfg.epochs, "Training epochs")->capture_default_str();
    app->add_option("--base-lr", t.cfg.base_lr, "Initial learning rate")->capture_default_str();
    app->add_option("--decay-gamma", t.cfg.decay_gamma, "Per-epoch learning-rate multiplier")->capture_default_str();
    app->add_option("--batch-size", t.cfg.batch_size, "Minibatch size")->capture_default_str();
    app->add_option("--momentum", t.cfg.momentum, "SGD momentum (0 = plain SGD)")->capture_default_str();
    app->add_option("--train-seed", t.cfg.seed, "Weight-init and shuffle seed")->capture_default_str();
    app->add_option("--precision", t.precision, "real32 or real64")->capture_default_str();
    app->add_option("--activation", t.activation, "relu or tanh")->capture_default_str();
    app->add_option("--workers", t.cfg.workers, "Gradient worker threads")->capture_default_str();
    app->add_option("--conv1", t.cfg.net.conv1_filters, "conv1 filters")->capture_default_str();
    app->add_option("--conv2", t.cfg.net.conv2_filters, "conv2 filters")->capture_default_str();
    app->add_option("--fc1", t.cfg.net.fc1_units, "fc1 units")->capture_default_str();
    app->add_flag("--quantize-input,!--no-quantize-input", t.cfg.quantize_input,
                  "Feed 8-bit quantized pixels like an image file");
}

struct SpecArgs {
    std::string target = "TMP";
    std::string inputs = "tmp";
    std::string knockout = "none";
    std::string scaling = "global";
    int training_years = 30;
    int labeling_years = 10;
    double c_t = 0.0;
    std::uint64_t seed = 1;
    int id = 0;
    bool shuffle_labels = false;

    ExperimentSpec resolve() const {
        ExperimentSpec s;
        s.id = id;
        s.target = parse_target(target);
        s.inputs = parse_variable_list(inputs);
        s.knockout = parse_knockout(knockout);
        s.scaling = parse_scaling(scaling);
        s.training_years = training_years;
        s.labeling_years = labeling_years;
        s.c_t = c_t;
        s.seed = seed;
        s.shuffle_labels = shuffle_labels;
        s.validate();
        return s;
    }
};

void add_spec_options(CLI::App* app, SpecArgs& s, bool with_inputs = true) {
    app->add_option("--target", s.target, "TMP or PRE")->capture_default_str();
    if (with_inputs) app->add_option("--inputs", s.inputs, "Comma-separated input variables")->capture_default_str();
    app->add_option("--knockout", s.knockout, "none, seasonal_only or interannual_only")->capture_default_str();
    app->add_option("--scaling", s.scaling, "global or per_image")->capture_default_str();
    app->add_option("--training-years", s.training_years, "Training period length")->capture_default_str();
    app->add_option("--labeling-years", s.labeling_years, "Labeling period length")->capture_default_str();
    app->add_option("--c-t", s.c_t, "Grid-selection threshold")->capture_default_str();
    app->add_option("--seed", s.seed, "Selection, split and label-shuffle seed")->capture_default_str();
    app->add_option("--id", s.id, "Experiment id recorded in the manifest")->capture_default_str();
    app->add_flag("--shuffle-labels", s.shuffle_labels, "Permute labels (chance-level control)");
}

void write_params(const CLI::App& app, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << app.config_to_str(true, false);
}

void print_confusion(const ConfusionMatrix& cm) {
    std::printf("confusion (rows = true, cols = predicted)\n");
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        for (std::size_t j = 0; j < cm.classes(); ++j) std::printf("%7zu", cm.at(i, j));
        std::printf("\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VARENN climate-image classification pipeline"};
    app.set_config("--config", "", "INI/TOML file with option values");
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic climate cube");
    std::string synth_spec, synth_out;
    int synth_cells = 0, synth_years = 0;
    std::uint64_t synth_seed = 0;
    synth->add_option("--spec", synth_spec, "Synthetic spec file")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "Output cube (VCUBE1)")->required();
    synth->add_option("--n-cells", synth_cells, "Override n_cells");
    synth->add_option("--n-years", synth_years, "Override n_years");
    synth->add_option("--synth-seed", synth_seed, "Override seed");

    // encode
    auto* encode = app.add_subcommand("encode", "Encode one cell and window as a VARENN PNG");
    std::string enc_cube, enc_out, enc_inputs = "tmp", enc_knockout = "none", enc_scaling = "global";
    std::int64_t enc_cell = -1;
    int enc_year = 0, enc_train_years = 30;
    encode->add_option("--cube", enc_cube, "Input cube")->required()->check(CLI::ExistingFile);
    encode->add_option("--cell-id", enc_cell, "Cell id (default: first cell)");
    encode->add_option("--inputs", enc_inputs, "Comma-separated variables")->capture_default_str();
    encode->add_option("--start-year", enc_year, "First training year (default: first year)");
    encode->add_option("--training-years", enc_train_years, "Training period length")->capture_default_str();
    encode->add_option("--knockout", enc_knockout, "none, seasonal_only or interannual_only")->capture_default_str();
    encode->add_option("--scaling", enc_scaling, "global or per_image")->capture_default_str();
    encode->add_option("--out", enc_out, "Output PNG")->required();

    // dataset
    auto* dataset = app.add_subcommand("dataset", "Build a labeled dataset (manifest + image cache)");
    std::string ds_cube, ds_out;
    int ds_workers = 1;
    SpecArgs ds_spec;
    dataset->add_option("--cube", ds_cube, "Input cube")->required()->check(CLI::ExistingFile);
    dataset->add_option("--out-dir", ds_out, "Output directory")->required();
    dataset->add_option("--workers", ds_workers, "Encoding threads")->capture_default_str();
    add_spec_options(dataset, ds_spec);

    // train
    auto* trainc = app.add_subcommand("train", "Train LeNet on a dataset");
    std::string tr_manifest, tr_images, tr_out, tr_log;
    TrainArgs tr_args;
    trainc->add_option("--manifest", tr_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    trainc->add_option("--images", tr_images, "Image cache (VIMGC1)")->required()->check(CLI::ExistingFile);
    trainc->add_option("--out", tr_out, "Output checkpoint")->required();
    trainc->add_option("--log", tr_log, "Training log (default: <out>.log)");
    add_train_options(trainc, tr_args);

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    std::string ev_manifest, ev_images, ev_model, ev_split = "test", ev_weights = "quadratic", ev_pred;
    bool ev_no_quantize = false;
    eval->add_option("--manifest", ev_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    eval->add_option("--images", ev_images, "Image cache")->required()->check(CLI::ExistingFile);
    eval->add_option("--model", ev_model, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", ev_split, "train, validation or test")->capture_default_str();
    eval->add_option("--kappa-weights", ev_weights, "quadratic or linear")->capture_default_str();
    eval->add_option("--predictions", ev_pred, "Write per-record predictions (TSV)");
    eval->add_flag("--no-quantize-input", ev_no_quantize, "Feed raw float pixels");

    // suite
    auto* suite = app.add_subcommand("suite", "Run the 92 combinatorial experiments");
    std::string su_cube, su_out, su_target = "TMP", su_scaling = "global";
    std::vector<int> su_ids;
    double su_ct = 0.0;
    std::uint64_t su_seed = 1;
    int su_parallel = 1;
    TrainArgs su_train;
    suite->add_option("--cube", su_cube, "Input cube")->required()->check(CLI::ExistingFile);
    suite->add_option("--out-dir", su_out, "Output directory")->required();
    suite->add_option("--target", su_target, "TMP or PRE")->capture_default_str();
    suite->add_option("--scaling", su_scaling, "global or per_image")->capture_default_str();
    suite->add_option("--c-t", su_ct, "Grid-selection threshold")->capture_default_str();
    suite->add_option("--seed", su_seed, "Suite seed")->capture_default_str();
    suite->add_option("--ids", su_ids, "Subset of experiment ids")->delimiter(',');
    suite->add_option("--parallel", su_parallel, "Experiments run concurrently")->capture_default_str();
    add_train_options(suite, su_train);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Knockout and 10-year ablations of one experiment");
    std::string ab_cube, ab_out;
    SpecArgs ab_spec;
    TrainArgs ab_train;
    ablate->add_option("--cube", ab_cube, "Input cube")->required()->check(CLI::ExistingFile);
    ablate->add_option("--out", ab_out, "Ablation report (TSV)")->required();
    add_spec_options(ablate, ab_spec);
    add_train_options(ablate, ab_train);

    // render
    auto* render = app.add_subcommand("render", "Render a class or error map of predictions");
    std::string rd_manifest, rd_images, rd_model, rd_out, rd_kind = "classes", rd_split = "test";
    int rd_year = 0;
    double rd_res = 0.5;
    render->add_option("--manifest", rd_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    render->add_option("--images", rd_images, "Image cache")->required()->check(CLI::ExistingFile);
    render->add_option("--model", rd_model, "Checkpoint")->required()->check(CLI::ExistingFile);
    render->add_option("--kind", rd_kind, "classes, truth or errors")->capture_default_str();
    render->add_option("--split", rd_split, "Split to map")->capture_default_str();
    render->add_option("--year", rd_year, "Window start year (default: latest)");
    render->add_option("--resolution", rd_res, "Degrees per pixel")->capture_default_str();
    render->add_option("--out", rd_out, "Output PNG")->required();

    // report
    auto* reportc = app.add_subcommand("report", "Re-emit the summary table of a suite report");
    std::string rp_in, rp_out;
    reportc->add_option("--in", rp_in, "Suite report (TSV)")->required()->check(CLI::ExistingFile);
    reportc->add_option("--out", rp_out, "Summary text (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*synth) {
            SynthSpec spec = load_synth_spec(synth_spec);
            if (synth_cells > 0) spec.n_cells = synth_cells;
            if (synth_years > 0) spec.n_years = synth_years;
            if (synth->count("--synth-seed")) spec.seed = synth_seed;
            const auto generated = synth_generate(spec);
            save_cube(generated.cube, synth_out);
            write_params(app, synth_out + ".params");
            std::printf("wrote %s: %zu cells, %d years, variables %s\n", synth_out.c_str(), generated.cube.n_cells(),
                        generated.cube.n_years(), join_codes(generated.cube.variables()).c_str());
        } else if (*encode) {
            const ClimateCube cube = load_cube(enc_cube);
            std::size_t cell = 0;
            if (enc_cell >= 0) {
                const auto idx = cube.cell_index(enc_cell);
                if (!idx) throw ValidationError("cell id " + std::to_string(enc_cell) + " is not in the cube");
                cell = *idx;
            }
            const int start = encode->count("--start-year") ? enc_year - cube.start_year() : 0;
            if (start < 0 || start + enc_train_years > cube.n_years())
                throw DomainError("training period lies outside the cube");
            const WindowSpec w{12 * start, enc_train_years, 0};
            const auto vars = parse_variable_list(enc_inputs);
            const auto img = encode_window(cube, cell, vars, w, global_minmax(cube),
                                           {parse_knockout(enc_knockout), parse_scaling(enc_scaling)});
            if (!img) throw DatasetError("training period has missing values");
            export_png(*img, enc_out);
            std::printf("wrote %s\n", enc_out.c_str());
        } else if (*dataset) {
            const ExperimentSpec spec = ds_spec.resolve();
            const ClimateCube cube = load_cube(ds_cube);
            const Dataset ds = build_dataset(cube, spec, ds_workers);
            fs::create_directories(ds_out);
            save_manifest(ds.manifest, fs::path(ds_out) / "dataset.manifest");
            ds.images.save(fs::path(ds_out) / "images.vimgc");
            write_params(app, fs::path(ds_out) / "dataset.params");
            const auto h = ds.manifest.histogram();
            std::printf("%zu records from %zu cells (%zu windows excluded)\n", ds.manifest.records.size(),
                        ds.manifest.selected_cells, ds.manifest.excluded_windows);
            for (Split s : {Split::train, Split::validation, Split::test}) {
                std::printf("%-10s", to_string(s));
                for (auto c : h[static_cast<std::size_t>(s)]) std::printf(" %7zu", c);
                std::printf("\n");
            }
        } else if (*trainc) {
            const TrainConfig cfg = tr_args.resolve();
            const auto manifest = load_manifest(tr_manifest);
            const auto cache = ImageCache::load(tr_images);
            const auto result = train(manifest, cache, cfg);
            save_model(result.model, tr_out);
            const std::string log_path = tr_log.empty() ? tr_out + ".log" : tr_log;
            std::ofstream(log_path) << result.log.format();
            write_params(app, tr_out + ".params");
            const auto& last = result.log.epochs.back();
            std::printf("epoch %d: train loss %.4f, val loss %.4f, val accuracy %.4f\n", last.epoch, last.train_loss,
                        last.val_loss, last.val_accuracy);
        } else if (*eval) {
            const auto manifest = load_manifest(ev_manifest);
            const auto cache = ImageCache::load(ev_images);
            const Model model = load_model(ev_model);
            const Split split = parse_split(ev_split);
            std::vector<float> store;
            const auto data = gather_split(manifest, cache, split, store);
            if (data.size() == 0) throw DatasetError(std::string("split '") + to_string(split) + "' is empty");
            const Prediction pred = predict(model, data.images, !ev_no_quantize);
            const auto cm = ConfusionMatrix::from_labels(data.labels, pred.labels, kClasses);
            const KappaWeights w = ev_weights == "linear" ? KappaWeights::linear
                                  : ev_weights == "quadratic"
                                      ? KappaWeights::quadratic
                                      : throw ConfigError("unknown kappa weights '" + ev_weights + "'");
            std::printf("split %s: n = %zu, accuracy = %.4f", to_string(split), cm.n(), accuracy(cm));
            try {
                std::printf(", %s kappa = %.4f\n", to_string(w), weighted_kappa(cm, w));
            } catch (const StatisticsError& e) {
                std::printf(", kappa undefined (%s)\n", e.what());
            }
            print_confusion(cm);
            if (!ev_pred.empty()) {
                std::ofstream out(ev_pred);
                out << "cell_id\tlat\tlon\twindow_start_year\ttrue\tpredicted\n";
                const auto idx = manifest.indices(split);
                for (std::size_t k = 0; k < idx.size(); ++k) {
                    const auto& r = manifest.records[idx[k]];
                    out << r.cell_id << '\t' << r.lat << '\t' << r.lon << '\t' << r.window_start_year << '\t'
                        << r.label.ordinal << '\t' << pred.labels[k] + 1 << '\n';
                }
            }
        } else if (*suite) {
            const ClimateCube cube = load_cube(su_cube);
            SuiteOptions opt;
            opt.target = parse_target(su_target);
            opt.scaling = parse_scaling(su_scaling);
            opt.c_t = su_ct;
            opt.seed = su_seed;
            opt.train = su_train.resolve();
            opt.ids = su_ids;
            opt.parallel_experiments = su_parallel;
            opt.workers = su_train.cfg.workers;
            opt.output_dir = su_out;
            opt.on_result = [](const ExperimentResult& r) {
                if (r.ok)
                    std::fprintf(stderr, "#%d %s: accuracy %.4f\n", r.id, join_codes(r.inputs).c_str(), r.accuracy);
                else
                    std::fprintf(stderr, "#%d %s: error[%s]: %s\n", r.id, join_codes(r.inputs).c_str(),
                                 r.error_category.c_str(), r.error.c_str());
            };
            const SuiteReport report = run_suite(cube, opt);
            write_report(report, fs::path(su_out) / "suite.tsv");
            write_params(app, fs::path(su_out) / "suite.params");
            std::fputs(format_suite_summary(report).c_str(), stdout);
        } else if (*ablate) {
            const ClimateCube cube = load_cube(ab_cube);
            const ExperimentSpec spec = ab_spec.resolve();
            const TrainConfig cfg = ab_train.resolve();
            std::optional<SimilarityMatrix> sim;
            try {
                sim = similarity_matrix(cube);
            } catch (const Error&) {
            }
            const auto report = run_ablations(cube, spec, cfg, sim ? &*sim : nullptr, cfg.workers);
            const std::string text = format_ablations(report);
            std::ofstream(ab_out) << text;
            write_params(app, ab_out + ".params");
            std::fputs(text.c_str(), stdout);
        } else if (*render) {
            const auto manifest = load_manifest(rd_manifest);
            const auto cache = ImageCache::load(rd_images);
            const Model model = load_model(rd_model);
            const Split split = parse_split(rd_split);
            std::vector<float> store;
            const auto data = gather_split(manifest, cache, split, store);
            if (data.size() == 0) throw DatasetError(std::string("split '") + to_string(split) + "' is empty");
            Prediction pred = predict(model, data.images, true);
            const auto idx = manifest.indices(split);
            if (rd_kind == "truth") pred.labels = data.labels;
            MapKind kind;
            if (rd_kind == "classes" || rd_kind == "truth")
                kind = MapKind::classes;
            else if (rd_kind == "errors")
                kind = MapKind::errors;
            else
                throw ConfigError("unknown map kind '" + rd_kind + "'");
            const auto points = prediction_points(manifest, idx, pred, rd_year);
            write_map_png(render_map(points, kind, rd_res), rd_out);
            std::printf("wrote %s (%zu cells)\n", rd_out.c_str(), points.size());
        } else if (*reportc) {
            std::ifstream in(rp_in, std::ios::binary);
            std::stringstream buf;
            buf << in.rdbuf();
            const SuiteReport report = parse_suite_tsv(buf.str());
            const std::string text = format_suite_summary(report);
            if (rp_out.empty())
                std::fputs(text.c_str(), stdout);
            else
                std::ofstream(rp_out) << text;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(e.category())).c_str(), e.what());
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[internal]: %s\n", e.what());
        return 2;
    }
    return 0;
}
