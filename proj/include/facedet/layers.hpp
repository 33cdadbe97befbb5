#pragma once

// Forward-only CNN layer kernels. Every kernel is a pure function of its
// inputs. Work may be split across workers, but each output element is
// reduced sequentially over its receptive field, so results are bit-identical
// at any worker count.

#include <cstddef>
#include <span>
#include <vector>

#include "facedet/tensor.hpp"

namespace facedet {

struct Padding {
    std::size_t top = 0;
    std::size_t bottom = 0;
    std::size_t left = 0;
    std::size_t right = 0;

    static Padding uniform(std::size_t p) { return {p, p, p, p}; }
    bool operator==(const Padding&) const = default;
};

// Asymmetric padding that yields ceil(in / stride) outputs per axis for a
// window of `kernel` cells; the extra cell, when the total is odd, goes to the
// bottom/right.
Padding same_padding(std::size_t in_h, std::size_t in_w, std::size_t kernel, std::size_t stride);

/// Convolution kernels, one (kh x kw x in_per_group) block per output channel,
/// each block laid out row-major like a Tensor3.
struct ConvKernels {
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t in_per_group = 0;
    std::vector<float> data;

    ConvKernels() = default;
    ConvKernels(std::size_t out, std::size_t kh, std::size_t kw, std::size_t in_per_group,
                std::vector<float> values);
    static ConvKernels from_tensors(std::span<const Tensor3> per_output_channel);

    std::size_t block_size() const { return kernel_h * kernel_w * in_per_group; }
    float at(std::size_t oc, std::size_t ky, std::size_t kx, std::size_t ic) const {
        return data[oc * block_size() + (ky * kernel_w + kx) * in_per_group + ic];
    }
};

/// Output size per axis is floor((in + pad_before + pad_after - kernel) / stride) + 1.
Tensor3 conv2d(const Tensor3& input, const ConvKernels& kernels, std::span<const float> bias,
               std::size_t stride, Padding pad, std::size_t groups);
Tensor3 conv2d(const Tensor3& input, const ConvKernels& kernels, std::span<const float> bias,
               std::size_t stride, std::size_t pad, std::size_t groups);

Tensor3 relu(const Tensor3& input);
void relu_inplace(Tensor3& t);

/// Ceil-mode max pooling. Output size per axis is
/// ceil((in + pad_before + pad_after - window) / stride) + 1, dropping a
/// trailing window that would start in the bottom/right padding. Padded
/// cells never contribute to a max.
Tensor3 maxpool2d(const Tensor3& input, std::size_t window, std::size_t stride, Padding pad);
Tensor3 maxpool2d(const Tensor3& input, std::size_t window, std::size_t stride, std::size_t pad);

enum class ExpMode { exact, fast };

/// Across-channel local response normalisation,
/// b = a / (k + alpha / n * sum(a^2))^beta over the n channels centred on a,
/// clipped at the channel boundary.
Tensor3 lrn(const Tensor3& input, std::size_t n, float k, float alpha, float beta, ExpMode mode);

/// Schraudolph's exponential: a*y + b written into the high 32 bits of an
/// IEEE-754 double. Monotone in y; relative error stays within a few percent.
/// Throws NumericError for |y| > 700.
double fast_exp(double y);

}  // namespace facedet
