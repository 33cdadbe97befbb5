#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "facedet/errors.hpp"

namespace facedet {

/// Dense height x width x channels float array, row-major in
/// (row, column, channel) order. Element (r, c, k) lives at
/// (r * width + c) * channels + k.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
    Tensor3(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t offset(std::size_t r, std::size_t c, std::size_t k) const {
        return (r * width_ + c) * channels_ + k;
    }
    float& operator()(std::size_t r, std::size_t c, std::size_t k) { return data_[offset(r, c, k)]; }
    float operator()(std::size_t r, std::size_t c, std::size_t k) const { return data_[offset(r, c, k)]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    // Channel vector at one spatial cell.
    std::span<const float> cell(std::size_t r, std::size_t c) const {
        return std::span<const float>(data_).subspan(offset(r, c, 0), channels_);
    }

    std::vector<float> release() && { return std::move(data_); }

    bool operator==(const Tensor3&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<float> data_;
};

// True when every element is finite.
bool all_finite(std::span<const float> values);

}  // namespace facedet
