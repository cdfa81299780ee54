#include "varenn/render.hpp"

#include <algorithm>
#include <cmath>

#include "varenn/error.hpp"
#include "varenn/png.hpp"

namespace varenn {

const std::array<Rgb, kClasses>& class_palette() {
    // Warm for rises, cool for falls.
    static const std::array<Rgb, kClasses> palette{{
        {178, 24, 43},
        {239, 138, 98},
        {247, 247, 247},
        {103, 169, 207},
        {33, 102, 172},
    }};
    return palette;
}

std::pair<int, int> project(double lat, double lon, double resolution_deg) {
    if (!(resolution_deg > 0.0)) throw ConfigError("map resolution must be positive");
    const int width = static_cast<int>(std::lround(360.0 / resolution_deg));
    const int height = static_cast<int>(std::lround(180.0 / resolution_deg));
    const int x = static_cast<int>(std::floor((lon + 180.0) / resolution_deg));
    const int y = static_cast<int>(std::floor((90.0 - lat) / resolution_deg));
    return {std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1)};
}

RasterImage render_map(std::span<const MapPoint> points, MapKind kind, double resolution_deg) {
    if (points.empty()) throw ValidationError("nothing to render: no map points");
    if (!(resolution_deg > 0.0)) throw ConfigError("map resolution must be positive");
    RasterImage img;
    img.width = static_cast<int>(std::lround(360.0 / resolution_deg));
    img.height = static_cast<int>(std::lround(180.0 / resolution_deg));
    img.rgb.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = kMapBackground.r;
        img.rgb[i + 1] = kMapBackground.g;
        img.rgb[i + 2] = kMapBackground.b;
    }
    std::vector<std::uint8_t> has_error(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), 0);
    for (const auto& p : points) {
        if (p.category < 0 || p.category >= kClasses)
            throw ValidationError("map category " + std::to_string(p.category) + " outside the palette");
        const auto [x, y] = project(p.lat, p.lon, resolution_deg);
        const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) + static_cast<std::size_t>(x);
        Rgb c;
        if (kind == MapKind::classes) {
            c = class_palette()[static_cast<std::size_t>(p.category)];
        } else {
            has_error[pix] = has_error[pix] || p.error;
            c = has_error[pix] ? kMapError : kMapNeutral;
        }
        img.rgb[pix * 3] = c.r;
        img.rgb[pix * 3 + 1] = c.g;
        img.rgb[pix * 3 + 2] = c.b;
    }
    return img;
}

void write_map_png(const RasterImage& image, const std::filesystem::path& path) {
    write_png_rgb(path, image.width, image.height, image.rgb);
}

std::vector<MapPoint> prediction_points(const DatasetManifest& m, std::span<const std::size_t> records,
                                        const Prediction& prediction, int year) {
    if (records.size() != prediction.labels.size())
        throw ConsistencyError("prediction count does not match the record list");
    int chosen = year;
    if (chosen == 0)
        for (std::size_t i : records) chosen = std::max(chosen, m.records.at(i).window_start_year);
    std::vector<MapPoint> out;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = m.records.at(records[k]);
        if (r.window_start_year != chosen) continue;
        out.push_back({r.lat, r.lon, prediction.labels[k], prediction.labels[k] != r.label.class_index()});
    }
    return out;
}

}  // namespace varenn
