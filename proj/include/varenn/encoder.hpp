#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "varenn/climate.hpp"
#include "varenn/windowing.hpp"

namespace varenn {

inline constexpr int kImageSize = 60;
inline constexpr int kChannels = 3;
inline constexpr int kMonths = 12;
inline constexpr int kRowsPerMonth = kImageSize / kMonths;
inline constexpr std::size_t kImageValues = static_cast<std::size_t>(kImageSize) * kImageSize * kChannels;

/// Temporal ablations of a window before rasterization.
///   seasonal_only    : interannual variation removed (month-wise means, horizontal stripes)
///   interannual_only : seasonal variation removed (year-wise means, vertical stripes)
enum class Knockout { none, seasonal_only, interannual_only };

const char* to_string(Knockout k);
Knockout parse_knockout(std::string_view s);

enum class ScalingMode { global, per_image };

const char* to_string(ScalingMode s);
ScalingMode parse_scaling(std::string_view s);

/// One variable over one training period: value(m, y) for 12 months × `years` years.
class SeasonalGrid {
public:
    SeasonalGrid() = default;
    explicit SeasonalGrid(int years, double fill = 0.0)
        : years_(years), values_(static_cast<std::size_t>(kMonths) * static_cast<std::size_t>(years), fill) {}

    int years() const { return years_; }
    double& at(int month, int year) { return values_[static_cast<std::size_t>(month * years_ + year)]; }
    double at(int month, int year) const { return values_[static_cast<std::size_t>(month * years_ + year)]; }
    std::span<const double> values() const { return values_; }

    friend bool operator==(const SeasonalGrid&, const SeasonalGrid&) = default;

private:
    int years_ = 0;
    std::vector<double> values_;
};

/// A 60×60 RGB image in [0, 1], stored row-major as [row][col][channel].
struct VarennImage {
    std::vector<float> pixels = std::vector<float>(kImageValues, 0.0f);
    std::vector<VariableId> channel_map;
    Knockout knockout = Knockout::none;
    int training_years = 30;

    float at(int row, int col, int channel) const {
        return pixels[(static_cast<std::size_t>(row) * kImageSize + static_cast<std::size_t>(col)) * kChannels +
                      static_cast<std::size_t>(channel)];
    }
};

/// (x - min)/(max - min) clamped to [0, 1]; 0.5 when min == max.
double scale01(double x, const ValueRange& range);
double scale01(double x, const ScalingStats& stats, VariableId v);

/// Nearest-neighbour block replication: month m -> rows [5m, 5m+5),
/// year y -> columns [w*y, w*(y+1)) with w = 60 / years.
/// Throws ConfigError if the year count does not divide 60.
std::vector<double> rasterize(const SeasonalGrid& scaled);

/// vars[0] -> R, vars[1] -> G, vars[2] -> B; missing channels stay zero.
/// Throws ValidationError unless 1..3 variables are given in strictly increasing canonical order.
VarennImage compose_rgb(std::span<const SeasonalGrid> scaled, std::span<const VariableId> vars);

/// Every (m, y) replaced by the mean over years of month m.
SeasonalGrid knockout_interannual(const SeasonalGrid& grid);
/// Every (m, y) replaced by the mean over months of year y.
SeasonalGrid knockout_seasonal(const SeasonalGrid& grid);
SeasonalGrid apply_knockout(const SeasonalGrid& grid, Knockout k);

/// Raw training-period values of one variable; nullopt if any is missing.
std::optional<SeasonalGrid> extract_training_period(const ClimateCube& cube, std::size_t cell, VariableId v,
                                                    const WindowSpec& window);

struct EncodeOptions {
    Knockout knockout = Knockout::none;
    ScalingMode scaling = ScalingMode::global;
};

/// Full encoding of one (cell, window): extract, knockout, scale, rasterize, compose.
/// Returns nullopt if any selected variable has a missing value in the training period.
std::optional<VarennImage> encode_window(const ClimateCube& cube, std::size_t cell, std::span<const VariableId> vars,
                                         const WindowSpec& window, const ScalingStats& stats,
                                         const EncodeOptions& options = {});

/// round(255 * v) with halves rounded up, after clamping to [0, 1].
std::uint8_t quantize_byte(float v);

/// 8-bit RGB PNG of the image.
void export_png(const VarennImage& img, const std::filesystem::path& path);

/// Raw image tensor cache. File layout (little-endian):
///   "VIMGC1" | u32 count | u32 height | u32 width | u32 channels | f32 values[count][h][w][c]
class ImageCache {
public:
    std::size_t count() const { return data_.size() / kImageValues; }
    std::size_t append(const VarennImage& img);
    std::span<const float> image(std::size_t index) const {
        return std::span<const float>(data_).subspan(index * kImageValues, kImageValues);
    }
    std::span<const float> data() const { return data_; }
    void reserve(std::size_t images) { data_.reserve(images * kImageValues); }

    void save(const std::filesystem::path& path) const;
    static ImageCache load(const std::filesystem::path& path);

    friend bool operator==(const ImageCache&, const ImageCache&) = default;

private:
    std::vector<float> data_;
};

}  // namespace varenn
