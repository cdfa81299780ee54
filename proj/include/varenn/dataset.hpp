#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "varenn/climate.hpp"
#include "varenn/encoder.hpp"
#include "varenn/experiment_spec.hpp"
#include "varenn/windowing.hpp"

namespace varenn {

enum class Split { train, validation, test };

const char* to_string(Split s);
Split parse_split(std::string_view s);

inline constexpr int kClasses = 5;

struct SampleRecord {
    std::int64_t cell_id = 0;
    double lat = 0.0;
    double lon = 0.0;
    WindowSpec window;
    int window_start_year = 0;  ///< calendar year of the first training month
    LabelCategory label;
    Split split = Split::train;
    std::size_t image_ref = 0;  ///< index into the image cache

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// [split][class index] record counts.
using ClassHistogram = std::array<std::array<std::size_t, kClasses>, 3>;

struct DatasetManifest {
    int experiment_id = 0;
    Target target = Target::TMP;
    std::vector<VariableId> inputs;
    Knockout knockout = Knockout::none;
    ScalingMode scaling = ScalingMode::global;
    int training_years = 30;
    int labeling_years = 10;
    int start_year = 0;  ///< first calendar year of the cube
    std::uint64_t seed = 1;
    double c_t = 0.0;
    bool shuffle_labels = false;
    std::size_t selected_cells = 0;
    std::size_t excluded_windows = 0;  ///< windows dropped for missing data
    std::vector<SampleRecord> records;  ///< sorted by (cell_id, window start)

    ClassHistogram histogram() const;
    std::size_t count(Split s) const;
    /// Record positions belonging to a split, in manifest order.
    std::vector<std::size_t> indices(Split s) const;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
    DatasetManifest manifest;
    ImageCache images;
};

/// Cells whose draw U(seed, cell_id) in [0, 1) exceeds c_t, in input order.
/// The draw depends only on (seed, cell_id). Throws ConfigError unless c_t is in [0, 1].
std::vector<GridCell> select_grids(std::span<const GridCell> cells, double c_t, std::uint64_t seed);

/// Cell counts per split: floor(n f_i) plus largest-remainder rounding (ties to the
/// earlier split), then at least one cell for every positive fraction.
std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions);

/// Split of every cell, parallel to `cell_ids`. Ids are sorted, shuffled with the
/// seeded stream and cut contiguously into train | validation | test.
/// Throws DatasetError for fewer than 3 cells, ConfigError for bad fractions.
std::vector<Split> split_grids(std::span<const std::int64_t> cell_ids, const std::array<double, 3>& fractions,
                               std::uint64_t seed);

/// Encodes and labels every complete window of every selected cell.
/// Throws DatasetError if no usable sample remains.
Dataset build_dataset(const ClimateCube& cube, const ExperimentSpec& spec, int workers = 1);

/// Manifest text: '#' header lines, a column header, then one tab-separated record per line:
///   cell_id lat lon window_start_year label split image_offset
std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace varenn
