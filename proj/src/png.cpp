#include "varenn/png.hpp"

#include <png.h>

#include <cstring>

#include "binary_io.hpp"
#include "varenn/error.hpp"

namespace varenn {

namespace {

void on_write(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void on_flush(png_structp) {}

struct ReadState {
    std::span<const std::uint8_t> src;
    std::size_t pos = 0;
};

void on_read(png_structp png, png_bytep data, png_size_t len) {
    auto* st = static_cast<ReadState*>(png_get_io_ptr(png));
    if (st->pos + len > st->src.size()) png_error(png, "truncated PNG");
    std::memcpy(data, st->src.data() + st->pos, len);
    st->pos += len;
}

}  // namespace

std::vector<std::uint8_t> encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb) {
    if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw ValidationError("PNG buffer does not match its dimensions");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, on_write, on_flush);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r)
        rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(r) * width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
    detail::write_file(path, encode_png_rgb(width, height, rgb));
}

std::vector<std::uint8_t> decode_png_rgb(std::span<const std::uint8_t> bytes, int& width, int& height) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    ReadState state{bytes, 0};
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("PNG decoding failed");
    }
    png_set_read_fn(png, &state, on_read);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8)
        png_error(png, "expected 8-bit RGB");
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    out.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) rows[static_cast<std::size_t>(r)] = out.data() + static_cast<std::size_t>(r) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace varenn
