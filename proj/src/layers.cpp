#include "facedet/layers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include "facedet/parallel.hpp"

namespace facedet {

namespace {

// Register tile of the convolution micro-kernel: kOcTile output channels by
// kPixTile output pixels, held in kOcTile x 2 eight-lane accumulators.
constexpr std::size_t kOcTile = 6;
constexpr std::size_t kPixTile = 16;

using f32x8 = float __attribute__((vector_size(32)));

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t conv_out(std::size_t in, std::size_t before, std::size_t after, std::size_t kernel,
                     std::size_t stride, const char* axis) {
    if (in + before + after < kernel) {
        throw DimensionError(std::string("conv2d: kernel larger than padded input along ") + axis);
    }
    return (in + before + after - kernel) / stride + 1;
}

std::size_t pool_out(std::size_t in, std::size_t before, std::size_t after, std::size_t window,
                     std::size_t stride, const char* axis) {
    if (in + before + after < window) {
        throw DimensionError(std::string("maxpool2d: window larger than padded input along ") + axis);
    }
    std::size_t out = ceil_div(in + before + after - window, stride) + 1;
    // A trailing window starting in the after-padding would hold no real cell.
    if ((out - 1) * stride >= in + before) --out;
    return out;
}

// acc[o][t] = acc[o][t] + w[k][o] * x[k][t], sequential in k for every element.
inline void micro_kernel(std::size_t depth, const float* __restrict wpanel, const float* __restrict xpanel,
                         float (&acc)[kOcTile][kPixTile]) {
    f32x8 lo[kOcTile], hi[kOcTile];
    for (std::size_t o = 0; o < kOcTile; ++o) {
        __builtin_memcpy(&lo[o], &acc[o][0], sizeof(f32x8));
        __builtin_memcpy(&hi[o], &acc[o][8], sizeof(f32x8));
    }
    for (std::size_t k = 0; k < depth; ++k) {
        f32x8 x0, x1;
        __builtin_memcpy(&x0, xpanel + k * kPixTile, sizeof(f32x8));
        __builtin_memcpy(&x1, xpanel + k * kPixTile + 8, sizeof(f32x8));
        const float* w = wpanel + k * kOcTile;
        for (std::size_t o = 0; o < kOcTile; ++o) {
            const f32x8 wo = f32x8{} + w[o];
            lo[o] = lo[o] + wo * x0;
            hi[o] = hi[o] + wo * x1;
        }
    }
    for (std::size_t o = 0; o < kOcTile; ++o) {
        __builtin_memcpy(&acc[o][0], &lo[o], sizeof(f32x8));
        __builtin_memcpy(&acc[o][8], &hi[o], sizeof(f32x8));
    }
}

}  // namespace

Padding same_padding(std::size_t in_h, std::size_t in_w, std::size_t kernel, std::size_t stride) {
    auto axis = [&](std::size_t in) -> std::pair<std::size_t, std::size_t> {
        const std::size_t out = ceil_div(in, stride);
        const std::size_t need = (out - 1) * stride + kernel;
        const std::size_t total = need > in ? need - in : 0;
        return {total / 2, total - total / 2};
    };
    const auto [top, bottom] = axis(in_h);
    const auto [left, right] = axis(in_w);
    return {top, bottom, left, right};
}

ConvKernels::ConvKernels(std::size_t out, std::size_t kh, std::size_t kw, std::size_t in_per_group_,
                         std::vector<float> values)
    : out_channels(out), kernel_h(kh), kernel_w(kw), in_per_group(in_per_group_), data(std::move(values)) {
    if (out == 0 || kh == 0 || kw == 0 || in_per_group == 0) {
        throw DimensionError("conv kernels must have non-zero dimensions");
    }
    if (data.size() != out * kh * kw * in_per_group) {
        throw DimensionError("conv kernel data length " + std::to_string(data.size()) +
                             " does not match its shape");
    }
}

ConvKernels ConvKernels::from_tensors(std::span<const Tensor3> per_output_channel) {
    if (per_output_channel.empty()) throw DimensionError("conv kernels: no output channels");
    const Tensor3& first = per_output_channel.front();
    std::vector<float> values;
    values.reserve(per_output_channel.size() * first.size());
    for (const Tensor3& t : per_output_channel) {
        if (t.height() != first.height() || t.width() != first.width() || t.channels() != first.channels()) {
            throw DimensionError("conv kernels: output channel kernels differ in shape");
        }
        values.insert(values.end(), t.data().begin(), t.data().end());
    }
    return ConvKernels(per_output_channel.size(), first.height(), first.width(), first.channels(),
                       std::move(values));
}

Tensor3 conv2d(const Tensor3& input, const ConvKernels& kernels, std::span<const float> bias,
               std::size_t stride, Padding pad, std::size_t groups) {
    if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
    if (groups == 0) throw DimensionError("conv2d: groups must be >= 1");
    if (kernels.in_per_group * groups != input.channels()) {
        throw DimensionError("conv2d: channel axis mismatch, input has " + std::to_string(input.channels()) +
                             " channels but kernels expect " + std::to_string(kernels.in_per_group) + " x " +
                             std::to_string(groups) + " groups");
    }
    if (kernels.out_channels % groups != 0) {
        throw DimensionError("conv2d: output channels not divisible by groups");
    }
    if (bias.size() != kernels.out_channels) {
        throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) + " != output channels " +
                             std::to_string(kernels.out_channels));
    }

    const std::size_t in_h = input.height(), in_w = input.width(), in_c = input.channels();
    const std::size_t kh = kernels.kernel_h, kw = kernels.kernel_w, cin_g = kernels.in_per_group;
    const std::size_t out_h = conv_out(in_h, pad.top, pad.bottom, kh, stride, "height");
    const std::size_t out_w = conv_out(in_w, pad.left, pad.right, kw, stride, "width");
    const std::size_t oc_total = kernels.out_channels;
    const std::size_t oc_g = oc_total / groups;
    const std::size_t depth = kernels.block_size();
    const std::size_t pixels = out_h * out_w;
    const std::size_t pix_tiles = ceil_div(pixels, kPixTile);
    const std::size_t oc_tiles = ceil_div(oc_g, kOcTile);

    Tensor3 output(out_h, out_w, oc_total);
    const float* in = input.data().data();
    float* out = output.data().data();

    std::vector<float> xpanels(pix_tiles * depth * kPixTile);
    std::vector<float> wpanels(oc_tiles * depth * kOcTile);

    for (std::size_t g = 0; g < groups; ++g) {
        // Pack input patches: one depth x kPixTile panel per pixel tile.
        parallel_for(pix_tiles, [&](std::size_t tile) {
            float* panel = xpanels.data() + tile * depth * kPixTile;
            for (std::size_t t = 0; t < kPixTile; ++t) {
                const std::size_t p = tile * kPixTile + t;
                if (p >= pixels) {
                    for (std::size_t k = 0; k < depth; ++k) panel[k * kPixTile + t] = 0.0f;
                    continue;
                }
                const std::size_t oy = p / out_w, ox = p % out_w;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad.top);
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad.left);
                        float* dst = panel + ((ky * kw + kx) * cin_g) * kPixTile + t;
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(in_h) &&
                                            ix < static_cast<std::ptrdiff_t>(in_w);
                        if (!inside) {
                            for (std::size_t ic = 0; ic < cin_g; ++ic) dst[ic * kPixTile] = 0.0f;
                            continue;
                        }
                        const float* src = in + (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * in_c +
                                           g * cin_g;
                        for (std::size_t ic = 0; ic < cin_g; ++ic) dst[ic * kPixTile] = src[ic];
                    }
                }
            }
        });

        // Pack this group's kernels: one depth x kOcTile panel per channel tile.
        for (std::size_t ot = 0; ot < oc_tiles; ++ot) {
            float* panel = wpanels.data() + ot * depth * kOcTile;
            for (std::size_t o = 0; o < kOcTile; ++o) {
                const std::size_t oc = ot * kOcTile + o;
                for (std::size_t k = 0; k < depth; ++k) {
                    panel[k * kOcTile + o] = oc < oc_g ? kernels.data[(g * oc_g + oc) * depth + k] : 0.0f;
                }
            }
        }

        parallel_for(pix_tiles, [&](std::size_t tile) {
            const float* xpanel = xpanels.data() + tile * depth * kPixTile;
            const std::size_t p0 = tile * kPixTile;
            const std::size_t np = std::min(kPixTile, pixels - p0);
            for (std::size_t ot = 0; ot < oc_tiles; ++ot) {
                float acc[kOcTile][kPixTile];
                for (std::size_t o = 0; o < kOcTile; ++o) {
                    const std::size_t oc = ot * kOcTile + o;
                    const float b = oc < oc_g ? bias[g * oc_g + oc] : 0.0f;
                    for (std::size_t t = 0; t < kPixTile; ++t) acc[o][t] = b;
                }
                micro_kernel(depth, wpanels.data() + ot * depth * kOcTile, xpanel, acc);
                const std::size_t no = std::min(kOcTile, oc_g - ot * kOcTile);
                for (std::size_t t = 0; t < np; ++t) {
                    float* dst = out + (p0 + t) * oc_total + g * oc_g + ot * kOcTile;
                    for (std::size_t o = 0; o < no; ++o) dst[o] = acc[o][t];
                }
            }
        });
    }
    return output;
}

Tensor3 conv2d(const Tensor3& input, const ConvKernels& kernels, std::span<const float> bias,
               std::size_t stride, std::size_t pad, std::size_t groups) {
    return conv2d(input, kernels, bias, stride, Padding::uniform(pad), groups);
}

void relu_inplace(Tensor3& t) {
    for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

Tensor3 relu(const Tensor3& input) {
    Tensor3 out = input;
    relu_inplace(out);
    return out;
}

Tensor3 maxpool2d(const Tensor3& input, std::size_t window, std::size_t stride, Padding pad) {
    if (window == 0) throw DimensionError("maxpool2d: window must be >= 1");
    if (stride == 0) throw DimensionError("maxpool2d: stride must be >= 1");
    if (pad.top >= window || pad.bottom >= window || pad.left >= window || pad.right >= window) {
        throw DimensionError("maxpool2d: padding must be smaller than the window");
    }
    const std::size_t in_h = input.height(), in_w = input.width(), ch = input.channels();
    const std::size_t out_h = pool_out(in_h, pad.top, pad.bottom, window, stride, "height");
    const std::size_t out_w = pool_out(in_w, pad.left, pad.right, window, stride, "width");

    Tensor3 output(out_h, out_w, ch);
    parallel_for(out_h, [&](std::size_t oy) {
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(pad.top);
        const std::size_t ys = static_cast<std::size_t>(std::max<std::ptrdiff_t>(y0, 0));
        const std::size_t ye = std::min<std::size_t>(static_cast<std::size_t>(y0 + static_cast<std::ptrdiff_t>(window)), in_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(pad.left);
            const std::size_t xs = static_cast<std::size_t>(std::max<std::ptrdiff_t>(x0, 0));
            const std::size_t xe = std::min<std::size_t>(static_cast<std::size_t>(x0 + static_cast<std::ptrdiff_t>(window)), in_w);
            float* dst = &output(oy, ox, 0);
            std::fill(dst, dst + ch, -std::numeric_limits<float>::infinity());
            for (std::size_t y = ys; y < ye; ++y) {
                for (std::size_t x = xs; x < xe; ++x) {
                    const float* src = input.data().data() + input.offset(y, x, 0);
                    for (std::size_t k = 0; k < ch; ++k) dst[k] = std::max(dst[k], src[k]);
                }
            }
        }
    });
    return output;
}

Tensor3 maxpool2d(const Tensor3& input, std::size_t window, std::size_t stride, std::size_t pad) {
    return maxpool2d(input, window, stride, Padding::uniform(pad));
}

Tensor3 lrn(const Tensor3& input, std::size_t n, float k, float alpha, float beta, ExpMode mode) {
    if (n == 0 || n % 2 == 0) throw DimensionError("lrn: depth n must be odd and >= 1");
    const std::size_t ch = input.channels();
    const std::size_t half = n / 2;
    const std::size_t cells = input.height() * input.width();
    const double scale = static_cast<double>(alpha) / static_cast<double>(n);

    Tensor3 output(input.height(), input.width(), ch);
    const float* in = input.data().data();
    float* out = output.data().data();
    parallel_for(input.height(), [&](std::size_t row) {
        std::vector<double> sq(ch);
        for (std::size_t cell = row * input.width(); cell < (row + 1) * input.width() && cell < cells; ++cell) {
            const float* a = in + cell * ch;
            float* b = out + cell * ch;
            for (std::size_t c = 0; c < ch; ++c) sq[c] = static_cast<double>(a[c]) * a[c];
            for (std::size_t c = 0; c < ch; ++c) {
                const std::size_t lo = c >= half ? c - half : 0;
                const std::size_t hi = std::min(ch - 1, c + half);
                double sum = 0.0;
                for (std::size_t j = lo; j <= hi; ++j) sum += sq[j];
                const double denom = static_cast<double>(k) + scale * sum;
                if (!(denom > 0.0)) throw NumericError("lrn: non-positive denominator");
                const double p = mode == ExpMode::exact ? std::pow(denom, static_cast<double>(beta))
                                                        : fast_exp(static_cast<double>(beta) * std::log(denom));
                b[c] = static_cast<float>(a[c] / p);
            }
        }
    });
    return output;
}

double fast_exp(double y) {
    if (!(std::abs(y) <= 700.0)) throw NumericError("fast_exp: argument out of range");
    // a = 2^20 / ln 2, b = 1023 * 2^20, c = 60801 (Schraudolph's RMS-optimal shift).
    constexpr double a = 1048576.0 / std::numbers::ln2;
    constexpr double b_minus_c = 1072693248.0 - 60801.0;
    const auto high = static_cast<std::int64_t>(a * y + b_minus_c);
    return std::bit_cast<double>(static_cast<std::uint64_t>(high) << 32);
}

}  // namespace facedet
