#include "varenn/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "varenn/error.hpp"
#include "varenn/png.hpp"

namespace varenn {

namespace {
constexpr std::string_view kCacheMagic = "VIMGC1";
}

const char* to_string(Knockout k) {
    switch (k) {
        case Knockout::none: return "none";
        case Knockout::seasonal_only: return "seasonal_only";
        case Knockout::interannual_only: return "interannual_only";
    }
    return "none";
}

Knockout parse_knockout(std::string_view s) {
    if (s == "none") return Knockout::none;
    if (s == "seasonal_only") return Knockout::seasonal_only;
    if (s == "interannual_only") return Knockout::interannual_only;
    throw ConfigError("unknown knockout mode '" + std::string(s) + "'");
}

const char* to_string(ScalingMode s) { return s == ScalingMode::global ? "global" : "per_image"; }

ScalingMode parse_scaling(std::string_view s) {
    if (s == "global") return ScalingMode::global;
    if (s == "per_image") return ScalingMode::per_image;
    throw ConfigError("unknown scaling mode '" + std::string(s) + "'");
}

double scale01(double x, const ValueRange& range) {
    if (range.max == range.min) return 0.5;
    return std::clamp((x - range.min) / (range.max - range.min), 0.0, 1.0);
}

double scale01(double x, const ScalingStats& stats, VariableId v) { return scale01(x, stats.of(v)); }

std::vector<double> rasterize(const SeasonalGrid& scaled) {
    const int years = scaled.years();
    if (years <= 0 || kImageSize % years != 0)
        throw ConfigError("a " + std::to_string(years) + "-year period does not divide the 60-pixel width");
    const int block_w = kImageSize / years;
    std::vector<double> raster(static_cast<std::size_t>(kImageSize) * kImageSize);
    for (int row = 0; row < kImageSize; ++row) {
        const int m = row / kRowsPerMonth;
        for (int col = 0; col < kImageSize; ++col)
            raster[static_cast<std::size_t>(row * kImageSize + col)] = scaled.at(m, col / block_w);
    }
    return raster;
}

VarennImage compose_rgb(std::span<const SeasonalGrid> scaled, std::span<const VariableId> vars) {
    if (vars.empty() || vars.size() > static_cast<std::size_t>(kChannels))
        throw ValidationError("an image holds 1 to 3 variables, got " + std::to_string(vars.size()));
    if (scaled.size() != vars.size()) throw ValidationError("one grid per variable is required");
    for (std::size_t i = 1; i < vars.size(); ++i)
        if (!(vars[i - 1] < vars[i]))
            throw ValidationError("variables must be distinct and in canonical order: " + join_codes(vars));

    VarennImage img;
    img.channel_map.assign(vars.begin(), vars.end());
    img.training_years = scaled.front().years();
    for (std::size_t ch = 0; ch < vars.size(); ++ch) {
        if (scaled[ch].years() != img.training_years) throw ValidationError("grids span different year counts");
        const auto raster = rasterize(scaled[ch]);
        for (std::size_t p = 0; p < raster.size(); ++p) img.pixels[p * kChannels + ch] = static_cast<float>(raster[p]);
    }
    return img;
}

SeasonalGrid knockout_interannual(const SeasonalGrid& grid) {
    SeasonalGrid out(grid.years());
    for (int m = 0; m < kMonths; ++m) {
        double sum = 0.0;
        bool flat = true;
        for (int y = 0; y < grid.years(); ++y) {
            sum += grid.at(m, y);
            flat = flat && grid.at(m, y) == grid.at(m, 0);
        }
        // a constant row keeps its value exactly, so the knockout is idempotent
        const double mean = flat ? grid.at(m, 0) : sum / grid.years();
        for (int y = 0; y < grid.years(); ++y) out.at(m, y) = mean;
    }
    return out;
}

SeasonalGrid knockout_seasonal(const SeasonalGrid& grid) {
    SeasonalGrid out(grid.years());
    for (int y = 0; y < grid.years(); ++y) {
        double sum = 0.0;
        bool flat = true;
        for (int m = 0; m < kMonths; ++m) {
            sum += grid.at(m, y);
            flat = flat && grid.at(m, y) == grid.at(0, y);
        }
        const double mean = flat ? grid.at(0, y) : sum / kMonths;
        for (int m = 0; m < kMonths; ++m) out.at(m, y) = mean;
    }
    return out;
}

SeasonalGrid apply_knockout(const SeasonalGrid& grid, Knockout k) {
    switch (k) {
        case Knockout::none: return grid;
        case Knockout::seasonal_only: return knockout_interannual(grid);
        case Knockout::interannual_only: return knockout_seasonal(grid);
    }
    return grid;
}

std::optional<SeasonalGrid> extract_training_period(const ClimateCube& cube, std::size_t cell, VariableId v,
                                                    const WindowSpec& window) {
    if (window.training_end_month() > cube.n_months()) throw DomainError("window extends past the end of the cube");
    const std::size_t slot = cube.require_slot(v);
    SeasonalGrid grid(window.training_years);
    for (int y = 0; y < window.training_years; ++y) {
        for (int m = 0; m < kMonths; ++m) {
            const float x = cube.at(slot, window.start_month_index + 12 * y + m, cell);
            if (is_missing(x)) return std::nullopt;
            grid.at(m, y) = x;
        }
    }
    return grid;
}

std::optional<VarennImage> encode_window(const ClimateCube& cube, std::size_t cell, std::span<const VariableId> vars,
                                         const WindowSpec& window, const ScalingStats& stats,
                                         const EncodeOptions& options) {
    std::vector<SeasonalGrid> scaled;
    scaled.reserve(vars.size());
    for (VariableId v : vars) {
        auto raw = extract_training_period(cube, cell, v, window);
        if (!raw) return std::nullopt;
        SeasonalGrid grid = apply_knockout(*raw, options.knockout);
        ValueRange range;
        if (options.scaling == ScalingMode::global) {
            range = stats.of(v);
        } else {
            const auto vals = grid.values();
            const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
            range = {*lo, *hi};
        }
        for (int m = 0; m < kMonths; ++m)
            for (int y = 0; y < grid.years(); ++y) grid.at(m, y) = scale01(grid.at(m, y), range);
        scaled.push_back(std::move(grid));
    }
    VarennImage img = compose_rgb(scaled, vars);
    img.knockout = options.knockout;
    return img;
}

std::uint8_t quantize_byte(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
}

void export_png(const VarennImage& img, const std::filesystem::path& path) {
    std::vector<std::uint8_t> rgb(kImageValues);
    for (std::size_t i = 0; i < kImageValues; ++i) rgb[i] = quantize_byte(img.pixels[i]);
    write_png_rgb(path, kImageSize, kImageSize, rgb);
}

std::size_t ImageCache::append(const VarennImage& img) {
    const std::size_t index = count();
    data_.insert(data_.end(), img.pixels.begin(), img.pixels.end());
    return index;
}

void ImageCache::save(const std::filesystem::path& path) const {
    detail::ByteWriter w;
    w.bytes(kCacheMagic);
    w.u32(static_cast<std::uint32_t>(count()));
    w.u32(kImageSize);
    w.u32(kImageSize);
    w.u32(kChannels);
    w.buffer().reserve(w.buffer().size() + data_.size() * 4);
    for (float x : data_) w.f32(x);
    detail::write_file(path, w.buffer());
}

ImageCache ImageCache::load(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader r(bytes, "VIMGC1");
    if (bytes.size() < kCacheMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kCacheMagic.size()) != kCacheMagic)
        throw FormatError("bad magic: not a VIMGC1 image cache");
    r.bytes(kCacheMagic.size());
    const std::uint32_t n = r.u32();
    const std::uint32_t h = r.u32(), w = r.u32(), c = r.u32();
    if (h != kImageSize || w != kImageSize || c != kChannels) throw FormatError("image cache has unexpected dimensions");
    const std::size_t n_values = static_cast<std::size_t>(n) * kImageValues;
    if (r.remaining() != n_values * 4) throw LengthError("image cache payload size does not match its header");
    ImageCache cache;
    cache.data_.resize(n_values);
    for (auto& x : cache.data_) x = r.f32();
    return cache;
}

}  // namespace varenn
