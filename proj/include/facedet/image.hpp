#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "facedet/tensor.hpp"

namespace facedet {

/// 8-bit RGB image, row-major, interleaved channels.
struct ImagePlane {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // rows * cols * 3

    ImagePlane() = default;
    ImagePlane(std::size_t r, std::size_t c, std::array<std::uint8_t, 3> fill = {0, 0, 0});

    std::uint8_t* at(std::size_t r, std::size_t c) { return pixels.data() + (r * cols + c) * 3; }
    const std::uint8_t* at(std::size_t r, std::size_t c) const { return pixels.data() + (r * cols + c) * 3; }

    bool operator==(const ImagePlane&) const = default;
};

// Binary PPM (P6, maxval 255).
void write_ppm(const ImagePlane& image, const std::filesystem::path& path);
ImagePlane read_ppm(const std::filesystem::path& path);

inline constexpr std::array<float, 3> kChannelMeans = {123.68f, 116.78f, 103.94f};
inline constexpr std::size_t kDefaultLongSide = 640;

struct ResizedShape {
    std::size_t rows;
    std::size_t cols;
};

// Shape after scaling the longer side to target_long_side, aspect preserved.
ResizedShape resized_shape(std::size_t rows, std::size_t cols, std::size_t target_long_side);

/// Bilinear resize to the longer side, then per-channel mean subtraction.
/// Output is rows x cols x 3 float, RGB order.
Tensor3 preprocess(const ImagePlane& image, std::size_t target_long_side = kDefaultLongSide);

}  // namespace facedet
