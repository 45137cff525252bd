// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace logasset {

// Interleaved float image, row-major, channel values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels = 3, float fill = 0.0f)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {}

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int channels() const noexcept { return channels_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    float& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    [[nodiscard]] float at(int x, int y, int c) const { return data_[index(x, y, c)]; }

    [[nodiscard]] const std::vector<float>& data() const noexcept { return data_; }
    std::vector<float>& data() noexcept { return data_; }

    // Bilinear sample at continuous coordinates where pixel (i, j) is
    // centered at (i + 0.5, j + 0.5). Coordinates are clamped to the edge.
    [[nodiscard]] float sample(double u, double v, int c) const;

    bool operator==(const Image&) const = default;

private:
    [[nodiscard]] std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

// Binary mask, one byte per pixel (0 or 1).
class Mask {
public:
    Mask() = default;
    Mask(int width, int height, std::uint8_t fill = 0)
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    std::uint8_t& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    [[nodiscard]] std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    [[nodiscard]] const std::vector<std::uint8_t>& data() const noexcept { return data_; }
    std::vector<std::uint8_t>& data() noexcept { return data_; }

    [[nodiscard]] std::size_t count() const;

    bool operator==(const Mask&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// 8-bit PNG I/O. Float channels are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Mask& mask);
// Reads any 8-bit PNG as RGB (gray is replicated, alpha dropped).
Image read_png_rgb(const std::filesystem::path& path);
// Reads a PNG as a mask: nonzero first channel is foreground.
Mask read_png_mask(const std::filesystem::path& path);
// Encodes to an in-memory PNG byte stream.
std::vector<std::uint8_t> encode_png(const Image& image);

} // namespace logasset
