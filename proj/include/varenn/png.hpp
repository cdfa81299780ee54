#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace varenn {

/// Encodes 8-bit RGB rows (width*3 bytes each) as a PNG with fixed settings,
/// so identical pixels always give identical files.
std::vector<std::uint8_t> encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);
void write_png_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);

/// Decodes an 8-bit RGB PNG written by encode_png_rgb (used by tests and tools).
std::vector<std::uint8_t> decode_png_rgb(std::span<const std::uint8_t> png, int& width, int& height);

}  // namespace varenn
