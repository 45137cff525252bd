// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/image.hpp"

#include "logasset/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace logasset {

float Image::sample(double u, double v, int c) const {
    const double x = std::clamp(u - 0.5, 0.0, static_cast<double>(width_ - 1));
    const double y = std::clamp(v - 0.5, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * at(x0, y0, c) + fx * at(x1, y0, c);
    const double bottom = (1.0 - fx) * at(x0, y1, c) + fx * at(x1, y1, c);
    return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](std::uint8_t v) { return v != 0; }));
}

namespace {

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> to_bytes(const Image& image, int& format_channels) {
    if (image.channels() != 1 && image.channels() != 3) {
        fail(ErrorCode::IoError, "PNG export supports 1 or 3 channels");
    }
    format_channels = image.channels();
    std::vector<std::uint8_t> bytes(image.size());
    std::transform(image.data().begin(), image.data().end(), bytes.begin(), to_byte);
    return bytes;
}

png_image make_header(int width, int height, int channels) {
    png_image header;
    std::memset(&header, 0, sizeof(header));
    header.version = PNG_IMAGE_VERSION;
    header.width = static_cast<png_uint_32>(width);
    header.height = static_cast<png_uint_32>(height);
    header.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    return header;
}

void write_bytes(const std::filesystem::path& path, int width, int height, int channels,
                 const std::vector<std::uint8_t>& bytes) {
    png_image header = make_header(width, height, channels);
    if (png_image_write_to_file(&header, path.c_str(), 0, bytes.data(), 0, nullptr) == 0) {
        const std::string msg = header.message;
        png_image_free(&header);
        fail(ErrorCode::IoError, "cannot write " + path.string() + ": " + msg);
    }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path, std::uint32_t format, int& width,
                                     int& height) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorCode::MissingFile, path.string());
    }
    png_image header;
    std::memset(&header, 0, sizeof(header));
    header.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&header, path.c_str()) == 0) {
        fail(ErrorCode::IoError, "cannot read " + path.string() + ": " + header.message);
    }
    header.format = format;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(header));
    if (png_image_finish_read(&header, nullptr, bytes.data(), 0, nullptr) == 0) {
        const std::string msg = header.message;
        png_image_free(&header);
        fail(ErrorCode::IoError, "cannot decode " + path.string() + ": " + msg);
    }
    width = static_cast<int>(header.width);
    height = static_cast<int>(header.height);
    return bytes;
}

} // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
    int channels = 0;
    const auto bytes = to_bytes(image, channels);
    write_bytes(path, image.width(), image.height(), channels, bytes);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint8_t> bytes(mask.data().size());
    std::transform(mask.data().begin(), mask.data().end(), bytes.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
    write_bytes(path, mask.width(), mask.height(), 1, bytes);
}

Image read_png_rgb(const std::filesystem::path& path) {
    int width = 0;
    int height = 0;
    const auto bytes = read_bytes(path, PNG_FORMAT_RGB, width, height);
    Image image(width, height, 3);
    std::transform(bytes.begin(), bytes.end(), image.data().begin(),
                   [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
    return image;
}

Mask read_png_mask(const std::filesystem::path& path) {
    int width = 0;
    int height = 0;
    const auto bytes = read_bytes(path, PNG_FORMAT_GRAY, width, height);
    Mask mask(width, height);
    std::transform(bytes.begin(), bytes.end(), mask.data().begin(),
                   [](std::uint8_t b) { return static_cast<std::uint8_t>(b >= 128 ? 1 : 0); });
    return mask;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    int channels = 0;
    const auto bytes = to_bytes(image, channels);
    png_image header = make_header(image.width(), image.height(), channels);
    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&header, nullptr, &size, 0, bytes.data(), 0, nullptr) == 0) {
        fail(ErrorCode::IoError, std::string("PNG size query failed: ") + header.message);
    }
    std::vector<std::uint8_t> out(size);
    if (png_image_write_to_memory(&header, out.data(), &size, 0, bytes.data(), 0, nullptr) == 0) {
        fail(ErrorCode::IoError, std::string("PNG encode failed: ") + header.message);
    }
    out.resize(size);
    return out;
}

} // namespace logasset
