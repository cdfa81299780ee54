#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "varenn/dataset.hpp"
#include "varenn/trainer.hpp"

namespace varenn {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kMapBackground{255, 255, 255};
inline constexpr Rgb kMapNeutral{190, 190, 190};
inline constexpr Rgb kMapError{255, 140, 0};

/// Class colours for categories 1..5 (index 0 = largest rise).
const std::array<Rgb, kClasses>& class_palette();

struct MapPoint {
    double lat = 0.0;
    double lon = 0.0;
    int category = 0;   ///< 0-based class index
    bool error = false; ///< prediction differs from truth
};

enum class MapKind { classes, errors };

struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Rgb at(int x, int y) const {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        return {rgb[i], rgb[i + 1], rgb[i + 2]};
    }
};

/// Equirectangular pixel of (lat, lon): x = floor((lon + 180)/res), y = floor((90 - lat)/res),
/// clamped to the raster.
std::pair<int, int> project(double lat, double lon, double resolution_deg);

/// Background white. Class maps paint palette[category] (later points overwrite earlier);
/// error maps paint neutral for correct cells and orange where any point at the pixel is an error.
/// Throws ValidationError on an empty point list or a category outside the palette.
RasterImage render_map(std::span<const MapPoint> points, MapKind kind, double resolution_deg = 0.5);

void write_map_png(const RasterImage& image, const std::filesystem::path& path);

/// Points of the test records of one window start year (the latest one when `year` is 0),
/// with the predicted class for class maps and truth mismatch for error maps.
std::vector<MapPoint> prediction_points(const DatasetManifest& m, std::span<const std::size_t> records,
                                        const Prediction& prediction, int year = 0);

}  // namespace varenn
