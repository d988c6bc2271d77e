#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nnfdet {

/// Interleaved 8-bit sRGB image, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // width * height * 3

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t* at(int x, int y) { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
    const std::uint8_t* at(int x, int y) const {
        return &pixels[3 * (static_cast<std::size_t>(y) * width + x)];
    }
    bool empty() const { return width == 0 || height == 0; }
};

/// Row-major single-channel float plane.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int w, int h, float fill = 0.f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Reads a binary PPM (P6, maxval 255) or 8-bit PNG.
RgbImage decode_image(const std::filesystem::path& path);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);

void write_ppm(const std::filesystem::path& path, const RgbImage& img);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);

/// Writes a plane as 8-bit PGM, linearly mapping [lo, hi] to [0, 255].
void write_pgm(const std::filesystem::path& path, const Plane& plane, float lo, float hi);

RgbImage flip_horizontal(const RgbImage& img);

/// Bilinear resample to (out_w, out_h) with pixel-center alignment and edge clamping.
RgbImage resample_bilinear(const RgbImage& img, int out_w, int out_h);

} // namespace nnfdet
