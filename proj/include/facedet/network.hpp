#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "facedet/dfw.hpp"
#include "facedet/layers.hpp"
#include "facedet/tensor.hpp"

namespace facedet {

// nullopt padding means "same": ceil(in / stride) outputs per axis.
struct ConvSpec {
    std::size_t kernel = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t stride = 1;
    std::size_t groups = 1;
    std::optional<std::size_t> padding;
    std::string weights;  // DFW entry, dims [out, kernel, kernel, in / groups]
    std::string bias;     // DFW entry, dims [out]
};

struct ReluSpec {};

struct MaxPoolSpec {
    std::size_t window = 1;
    std::size_t stride = 1;
    std::optional<std::size_t> padding;
};

struct LrnSpec {
    std::size_t n = 5;
    float k = 2.0f;
    float alpha = 1e-4f;
    float beta = 0.75f;
    ExpMode mode = ExpMode::exact;
};

struct LayerSpec {
    std::string name;
    std::variant<ConvSpec, ReluSpec, MaxPoolSpec, LrnSpec> params;

    std::size_t stride() const;
    bool is_conv() const { return std::holds_alternative<ConvSpec>(params); }
};

enum class ChannelOrder { rgb, bgr };

struct NetworkSpec {
    std::string name;
    std::size_t input_channels = 3;
    ChannelOrder channel_order = ChannelOrder::rgb;
    std::vector<LayerSpec> layers;

    std::size_t total_stride() const;
    std::size_t output_channels() const;
    void validate() const;  // throws ConfigError
};

// conv1..conv5 of AlexNet with "same" padding throughout, total stride 16.
NetworkSpec alexnet_conv5_spec();

NetworkSpec parse_network_spec(const std::string& json_text);
NetworkSpec load_network_spec(const std::filesystem::path& path);
std::string network_spec_to_json(const NetworkSpec& spec);

// Scalar DFW entry recording the channel order weights were trained for:
// 0 = RGB, 1 = BGR.
inline constexpr const char* kChannelOrderEntry = "meta/channel_order";

/// Deterministic He-normal conv weights with zero biases, for running the
/// pipeline without a converted pretrained checkpoint.
WeightStore random_weights(const NetworkSpec& spec, std::uint64_t seed);

struct LayerTiming {
    std::string name;
    bool conv = false;
    std::chrono::nanoseconds elapsed{0};
};

/// A network spec bound to its weights. Binding validates every conv layer's
/// weight and bias shapes once.
class Network {
public:
    Network(NetworkSpec spec, const WeightStore& weights);

    const NetworkSpec& spec() const { return spec_; }

    // Forces every LRN layer into the given exp mode.
    void set_lrn_mode(ExpMode mode);

    Tensor3 forward(const Tensor3& image, std::vector<LayerTiming>* timings = nullptr) const;

private:
    struct BoundConv {
        ConvKernels kernels;
        std::vector<float> bias;
    };

    NetworkSpec spec_;
    std::vector<std::optional<BoundConv>> bound_;  // parallel to spec_.layers
};

Tensor3 forward(const NetworkSpec& net, const WeightStore& weights, const Tensor3& image);

}  // namespace facedet
