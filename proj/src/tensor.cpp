#include "facedet/tensor.hpp"

#include <cmath>
#include <string>

namespace facedet {

namespace {

void check_dims(std::size_t h, std::size_t w, std::size_t c) {
    if (h == 0 || w == 0 || c == 0) {
        throw DimensionError("tensor dimensions must be >= 1, got " + std::to_string(h) + "x" +
                             std::to_string(w) + "x" + std::to_string(c));
    }
}

}  // namespace

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels) {
    check_dims(height, width, channels);
    data_.assign(height * width * channels, fill);
}

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_dims(height, width, channels);
    if (data_.size() != height * width * channels) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(height) + "x" + std::to_string(width) +
                             "x" + std::to_string(channels));
    }
}

bool all_finite(std::span<const float> values) {
    for (float v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace facedet
