#include "varenn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "text_util.hpp"
#include "varenn/error.hpp"
#include "varenn/rng.hpp"

namespace varenn {

namespace {

constexpr std::string_view kManifestMagic = "# varenn-manifest 1";
constexpr std::string_view kColumns = "cell_id\tlat\tlon\twindow_start_year\tlabel\tsplit\timage_offset";

struct CellSamples {
    std::vector<SampleRecord> records;
    std::vector<VarennImage> images;
    std::size_t excluded = 0;
};

}  // namespace

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw FormatError("unknown split '" + std::string(s) + "'");
}

ClassHistogram DatasetManifest::histogram() const {
    ClassHistogram h{};
    for (const auto& r : records)
        h[static_cast<std::size_t>(r.split)][static_cast<std::size_t>(r.label.class_index())] += 1;
    return h;
}

std::size_t DatasetManifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [s](const SampleRecord& r) { return r.split == s; }));
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == s) out.push_back(i);
    return out;
}

std::vector<GridCell> select_grids(std::span<const GridCell> cells, double c_t, std::uint64_t seed) {
    if (!(c_t >= 0.0 && c_t <= 1.0)) throw ConfigError("c_t must be in [0, 1]");
    std::vector<GridCell> out;
    for (const auto& c : cells)
        if (hashed_uniform01(seed, StreamTag::grid_selection, static_cast<std::uint64_t>(c.cell_id)) > c_t)
            out.push_back(c);
    return out;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions) {
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * fractions[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
        counts[order[k]] += 1;
        ++assigned;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (fractions[i] <= 0.0 || counts[i] > 0) continue;
        const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        if (counts[donor] <= 1) throw DatasetError("too few cells to populate every split");
        counts[donor] -= 1;
        counts[i] += 1;
    }
    return counts;
}

std::vector<Split> split_grids(std::span<const std::int64_t> cell_ids, const std::array<double, 3>& fractions,
                               std::uint64_t seed) {
    const std::size_t n = cell_ids.size();
    if (n < 3) throw DatasetError("degenerate split: " + std::to_string(n) + " cells, at least 3 required");
    const auto counts = split_counts(n, fractions);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cell_ids[a] < cell_ids[b]; });
    for (std::size_t i = 1; i < n; ++i)
        if (cell_ids[order[i]] == cell_ids[order[i - 1]])
            throw ValidationError("duplicate cell id " + std::to_string(cell_ids[order[i]]));
    RandomStream rng(seed, StreamTag::split_shuffle);
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<Split> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        Split s = Split::test;
        if (k < counts[0])
            s = Split::train;
        else if (k < counts[0] + counts[1])
            s = Split::validation;
        out[order[k]] = s;
    }
    return out;
}

Dataset build_dataset(const ClimateCube& cube, const ExperimentSpec& spec, int workers) {
    spec.validate();
    const VariableId target = target_variable(spec.target);
    cube.require_slot(target);
    for (VariableId v : spec.inputs) cube.require_slot(v);

    const auto windows = enumerate_windows(cube.n_years(), spec.training_years, spec.labeling_years);
    const ScalingStats stats = global_minmax(cube);
    const LabelThresholds thresholds = spec.label_thresholds();
    const LabelFamily family = label_family(spec.target);
    const EncodeOptions options{spec.knockout, spec.scaling};

    std::vector<GridCell> selected = select_grids(cube.grid(), spec.c_t, spec.seed);
    std::sort(selected.begin(), selected.end(),
              [](const GridCell& a, const GridCell& b) { return a.cell_id < b.cell_id; });
    if (selected.size() < 3)
        throw DatasetError("only " + std::to_string(selected.size()) + " cells selected at c_t = " +
                           detail::format_double(spec.c_t));
    std::vector<std::int64_t> ids;
    ids.reserve(selected.size());
    for (const auto& c : selected) ids.push_back(c.cell_id);
    const auto splits = split_grids(ids, spec.split_fractions, spec.seed);

    std::vector<CellSamples> per_cell(selected.size());
    auto process = [&](std::size_t i) {
        const GridCell& g = selected[i];
        const std::size_t cell = *cube.cell_index(g.cell_id);
        CellSamples& out = per_cell[i];
        for (const auto& w : windows) {
            const auto delta = trend_delta(cube, cell, target, w);
            auto img = delta ? encode_window(cube, cell, spec.inputs, w, stats, options) : std::nullopt;
            if (!delta || !img) {
                ++out.excluded;
                continue;
            }
            SampleRecord r;
            r.cell_id = g.cell_id;
            r.lat = g.lat;
            r.lon = g.lon;
            r.window = w;
            r.window_start_year = cube.start_year() + w.start_year_index();
            r.label = label_delta(delta->delta, family, thresholds);
            r.split = splits[i];
            out.records.push_back(r);
            out.images.push_back(std::move(*img));
        }
    };

    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), selected.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < selected.size(); ++i) process(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < selected.size(); i += threads) process(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    Dataset ds;
    DatasetManifest& m = ds.manifest;
    m.experiment_id = spec.id;
    m.target = spec.target;
    m.inputs = spec.inputs;
    m.knockout = spec.knockout;
    m.scaling = spec.scaling;
    m.training_years = spec.training_years;
    m.labeling_years = spec.labeling_years;
    m.start_year = cube.start_year();
    m.seed = spec.seed;
    m.c_t = spec.c_t;
    m.shuffle_labels = spec.shuffle_labels;
    m.selected_cells = selected.size();

    std::size_t total = 0;
    for (const auto& c : per_cell) total += c.records.size();
    if (total == 0) throw DatasetError("experiment " + std::to_string(spec.id) + ": no usable samples");
    ds.images.reserve(total);
    m.records.reserve(total);
    for (auto& c : per_cell) {
        m.excluded_windows += c.excluded;
        for (std::size_t k = 0; k < c.records.size(); ++k) {
            SampleRecord r = c.records[k];
            r.image_ref = ds.images.append(c.images[k]);
            m.records.push_back(r);
        }
        c = {};
    }

    if (spec.shuffle_labels) {
        std::vector<LabelCategory> labels;
        labels.reserve(total);
        for (const auto& r : m.records) labels.push_back(r.label);
        RandomStream rng(spec.seed, StreamTag::label_shuffle);
        rng.shuffle(std::span<LabelCategory>(labels));
        for (std::size_t i = 0; i < total; ++i) m.records[i].label = labels[i];
    }
    return ds;
}

std::string format_manifest(const DatasetManifest& m) {
    std::ostringstream out;
    out << kManifestMagic << '\n';
    out << "# experiment_id " << m.experiment_id << '\n';
    out << "# target " << to_string(m.target) << '\n';
    out << "# inputs " << join_codes(m.inputs) << '\n';
    out << "# knockout " << to_string(m.knockout) << '\n';
    out << "# scaling " << to_string(m.scaling) << '\n';
    out << "# training_years " << m.training_years << '\n';
    out << "# labeling_years " << m.labeling_years << '\n';
    out << "# start_year " << m.start_year << '\n';
    out << "# seed " << m.seed << '\n';
    out << "# c_t " << detail::format_double(m.c_t) << '\n';
    out << "# shuffle_labels " << (m.shuffle_labels ? 1 : 0) << '\n';
    out << "# selected_cells " << m.selected_cells << '\n';
    out << "# excluded_windows " << m.excluded_windows << '\n';
    out << "# records " << m.records.size() << '\n';
    const auto h = m.histogram();
    for (Split s : {Split::train, Split::validation, Split::test}) {
        out << "# histogram " << to_string(s);
        for (std::size_t k = 0; k < kClasses; ++k) out << ' ' << h[static_cast<std::size_t>(s)][k];
        out << '\n';
    }
    out << kColumns << '\n';
    for (const auto& r : m.records) {
        out << r.cell_id << '\t' << detail::format_double(r.lat) << '\t' << detail::format_double(r.lon) << '\t'
            << r.window_start_year << '\t' << r.label.ordinal << '\t' << to_string(r.split) << '\t' << r.image_ref
            << '\n';
    }
    return out.str();
}

DatasetManifest parse_manifest(std::string_view text) {
    const auto ls = detail::lines(text);
    if (ls.empty() || ls[0] != kManifestMagic) throw FormatError("not a manifest (missing '" + std::string(kManifestMagic) + "')");
    DatasetManifest m;
    std::size_t declared_records = 0;
    bool columns_seen = false;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        const std::string_view line = ls[i];
        if (line.empty()) continue;
        if (line.starts_with("# ")) {
            const std::string_view body = line.substr(2);
            const auto sp = body.find(' ');
            const std::string_view key = body.substr(0, sp);
            const std::string_view val = sp == std::string_view::npos ? std::string_view{} : body.substr(sp + 1);
            if (key == "experiment_id") m.experiment_id = detail::parse_number<int>(val, key);
            else if (key == "target") m.target = parse_target(val);
            else if (key == "inputs") m.inputs = parse_variable_list(val);
            else if (key == "knockout") m.knockout = parse_knockout(val);
            else if (key == "scaling") m.scaling = parse_scaling(val);
            else if (key == "training_years") m.training_years = detail::parse_number<int>(val, key);
            else if (key == "labeling_years") m.labeling_years = detail::parse_number<int>(val, key);
            else if (key == "start_year") m.start_year = detail::parse_number<int>(val, key);
            else if (key == "seed") m.seed = detail::parse_number<std::uint64_t>(val, key);
            else if (key == "c_t") m.c_t = detail::parse_number<double>(val, key);
            else if (key == "shuffle_labels") m.shuffle_labels = detail::parse_number<int>(val, key) != 0;
            else if (key == "selected_cells") m.selected_cells = detail::parse_number<std::size_t>(val, key);
            else if (key == "excluded_windows") m.excluded_windows = detail::parse_number<std::size_t>(val, key);
            else if (key == "records") declared_records = detail::parse_number<std::size_t>(val, key);
            continue;
        }
        if (line == kColumns) {
            columns_seen = true;
            continue;
        }
        if (!columns_seen) throw FormatError("manifest record before the column header");
        const auto f = detail::split(line, '\t');
        if (f.size() != 7) throw FormatError("manifest line " + std::to_string(i + 1) + ": expected 7 fields");
        SampleRecord r;
        r.cell_id = detail::parse_number<std::int64_t>(f[0], "cell_id");
        r.lat = detail::parse_number<double>(f[1], "lat");
        r.lon = detail::parse_number<double>(f[2], "lon");
        r.window_start_year = detail::parse_number<int>(f[3], "window_start_year");
        const int ordinal = detail::parse_number<int>(f[4], "label");
        if (ordinal < 1 || ordinal > kClasses) throw FormatError("label ordinal out of range: " + std::to_string(ordinal));
        r.label = {ordinal, label_family(m.target)};
        r.split = parse_split(f[5]);
        r.image_ref = detail::parse_number<std::size_t>(f[6], "image_offset");
        r.window = {12 * (r.window_start_year - m.start_year), m.training_years, m.labeling_years};
        m.records.push_back(r);
    }
    if (m.records.size() != declared_records)
        throw LengthError("manifest declares " + std::to_string(declared_records) + " records but holds " +
                          std::to_string(m.records.size()));
    return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    detail::write_text_file(path, format_manifest(m));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace varenn
