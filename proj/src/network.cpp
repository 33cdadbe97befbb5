#include "facedet/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "facedet/rng.hpp"
#include "json.hpp"

namespace facedet {

using nlohmann::json;

std::size_t LayerSpec::stride() const {
    if (const auto* c = std::get_if<ConvSpec>(&params)) return c->stride;
    if (const auto* p = std::get_if<MaxPoolSpec>(&params)) return p->stride;
    return 1;
}

std::size_t NetworkSpec::total_stride() const {
    std::size_t s = 1;
    for (const auto& layer : layers) s *= layer.stride();
    return s;
}

std::size_t NetworkSpec::output_channels() const {
    std::size_t channels = input_channels;
    for (const auto& layer : layers) {
        if (const auto* c = std::get_if<ConvSpec>(&layer.params)) channels = c->out_channels;
    }
    return channels;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw ConfigError("network '" + name + "' has no layers");
    std::size_t channels = input_channels;
    for (const auto& layer : layers) {
        const std::string where = "layer '" + layer.name + "'";
        if (const auto* c = std::get_if<ConvSpec>(&layer.params)) {
            if (c->kernel == 0 || c->stride == 0 || c->groups == 0 || c->out_channels == 0) {
                throw ConfigError(where + ": kernel, stride, groups and out_channels must be >= 1");
            }
            if (c->in_channels != channels) {
                throw ConfigError(where + ": expects " + std::to_string(c->in_channels) +
                                  " input channels, previous layer produces " + std::to_string(channels));
            }
            if (c->in_channels % c->groups != 0 || c->out_channels % c->groups != 0) {
                throw ConfigError(where + ": channel counts not divisible by groups");
            }
            if (c->weights.empty() || c->bias.empty()) throw ConfigError(where + ": missing weight binding");
            channels = c->out_channels;
        } else if (const auto* p = std::get_if<MaxPoolSpec>(&layer.params)) {
            if (p->window == 0 || p->stride == 0) throw ConfigError(where + ": window and stride must be >= 1");
        } else if (const auto* l = std::get_if<LrnSpec>(&layer.params)) {
            if (l->n == 0 || l->n % 2 == 0) throw ConfigError(where + ": LRN depth must be odd");
            if (!(l->k > 0.0f)) throw ConfigError(where + ": LRN bias k must be positive");
        }
    }
}

NetworkSpec alexnet_conv5_spec() {
    auto conv = [](std::string name, std::size_t kernel, std::size_t in, std::size_t out, std::size_t stride,
                   std::size_t groups) {
        ConvSpec c;
        c.kernel = kernel;
        c.in_channels = in;
        c.out_channels = out;
        c.stride = stride;
        c.groups = groups;
        c.weights = name + "/weights";
        c.bias = name + "/bias";
        return LayerSpec{std::move(name), c};
    };
    auto relu = [](std::string name) { return LayerSpec{std::move(name), ReluSpec{}}; };
    auto pool = [](std::string name) { return LayerSpec{std::move(name), MaxPoolSpec{3, 2, std::nullopt}}; };
    auto norm = [](std::string name) { return LayerSpec{std::move(name), LrnSpec{}}; };

    NetworkSpec spec;
    spec.name = "alexnet-conv5";
    spec.input_channels = 3;
    spec.layers = {
        conv("conv1", 11, 3, 96, 4, 1),    relu("relu1"), norm("norm1"), pool("pool1"),
        conv("conv2", 5, 96, 256, 1, 2),   relu("relu2"), norm("norm2"), pool("pool2"),
        conv("conv3", 3, 256, 384, 1, 1),  relu("relu3"),
        conv("conv4", 3, 384, 384, 1, 2),  relu("relu4"),
        conv("conv5", 3, 384, 256, 1, 2),  relu("relu5"),
    };
    return spec;
}

namespace {

std::optional<std::size_t> parse_padding(const json& j) {
    if (!j.contains("padding")) return std::nullopt;
    const json& p = j.at("padding");
    if (p.is_string()) {
        if (p.get<std::string>() == "same") return std::nullopt;
        throw ConfigError("unknown padding mode '" + p.get<std::string>() + "'");
    }
    return p.get<std::size_t>();
}

json padding_json(const std::optional<std::size_t>& p) {
    if (p) return *p;
    return "same";
}

}  // namespace

NetworkSpec parse_network_spec(const std::string& json_text) {
    NetworkSpec spec;
    try {
        const json doc = json::parse(json_text);
        spec.name = doc.value("name", std::string("network"));
        spec.input_channels = doc.value("input_channels", std::size_t{3});
        const std::string order = doc.value("channel_order", std::string("RGB"));
        if (order == "RGB") {
            spec.channel_order = ChannelOrder::rgb;
        } else if (order == "BGR") {
            spec.channel_order = ChannelOrder::bgr;
        } else {
            throw ConfigError("unknown channel_order '" + order + "'");
        }
        for (const json& l : doc.at("layers")) {
            LayerSpec layer;
            layer.name = l.value("name", std::string());
            const std::string type = l.at("type").get<std::string>();
            if (type == "conv") {
                ConvSpec c;
                c.kernel = l.at("kernel").get<std::size_t>();
                c.in_channels = l.at("in_channels").get<std::size_t>();
                c.out_channels = l.at("out_channels").get<std::size_t>();
                c.stride = l.value("stride", std::size_t{1});
                c.groups = l.value("groups", std::size_t{1});
                c.padding = parse_padding(l);
                c.weights = l.at("weights").get<std::string>();
                c.bias = l.at("bias").get<std::string>();
                layer.params = c;
            } else if (type == "relu") {
                layer.params = ReluSpec{};
            } else if (type == "maxpool") {
                MaxPoolSpec p;
                p.window = l.at("window").get<std::size_t>();
                p.stride = l.value("stride", std::size_t{1});
                p.padding = parse_padding(l);
                layer.params = p;
            } else if (type == "lrn") {
                LrnSpec n;
                n.n = l.value("n", n.n);
                n.k = l.value("k", n.k);
                n.alpha = l.value("alpha", n.alpha);
                n.beta = l.value("beta", n.beta);
                const std::string mode = l.value("exp_mode", std::string("exact"));
                if (mode == "exact") {
                    n.mode = ExpMode::exact;
                } else if (mode == "fast") {
                    n.mode = ExpMode::fast;
                } else {
                    throw ConfigError("unknown exp_mode '" + mode + "'");
                }
                layer.params = n;
            } else {
                throw ConfigError("unknown layer type '" + type + "'");
            }
            spec.layers.push_back(std::move(layer));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("network spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

NetworkSpec load_network_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open network spec '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_network_spec(buffer.str());
}

std::string network_spec_to_json(const NetworkSpec& spec) {
    json doc;
    doc["name"] = spec.name;
    doc["input_channels"] = spec.input_channels;
    doc["channel_order"] = spec.channel_order == ChannelOrder::rgb ? "RGB" : "BGR";
    json layers = json::array();
    for (const auto& layer : spec.layers) {
        json l;
        l["name"] = layer.name;
        if (const auto* c = std::get_if<ConvSpec>(&layer.params)) {
            l["type"] = "conv";
            l["kernel"] = c->kernel;
            l["in_channels"] = c->in_channels;
            l["out_channels"] = c->out_channels;
            l["stride"] = c->stride;
            l["groups"] = c->groups;
            l["padding"] = padding_json(c->padding);
            l["weights"] = c->weights;
            l["bias"] = c->bias;
        } else if (std::holds_alternative<ReluSpec>(layer.params)) {
            l["type"] = "relu";
        } else if (const auto* p = std::get_if<MaxPoolSpec>(&layer.params)) {
            l["type"] = "maxpool";
            l["window"] = p->window;
            l["stride"] = p->stride;
            l["padding"] = padding_json(p->padding);
        } else if (const auto* n = std::get_if<LrnSpec>(&layer.params)) {
            l["type"] = "lrn";
            l["n"] = n->n;
            l["k"] = n->k;
            l["alpha"] = n->alpha;
            l["beta"] = n->beta;
            l["exp_mode"] = n->mode == ExpMode::exact ? "exact" : "fast";
        }
        layers.push_back(std::move(l));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

WeightStore random_weights(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    WeightStore store;
    std::uint64_t stream = 0;
    for (const auto& layer : spec.layers) {
        const auto* c = std::get_if<ConvSpec>(&layer.params);
        if (!c) continue;
        Rng rng(mix_seed(seed, stream++));
        const std::size_t in_g = c->in_channels / c->groups;
        const std::size_t fan_in = c->kernel * c->kernel * in_g;
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        Array w;
        w.dims = {static_cast<std::uint32_t>(c->out_channels), static_cast<std::uint32_t>(c->kernel),
                  static_cast<std::uint32_t>(c->kernel), static_cast<std::uint32_t>(in_g)};
        w.values.resize(w.element_count());
        for (float& v : w.values) v = static_cast<float>(sd * rng.normal());
        store.put(c->weights, std::move(w));
        store.put(c->bias, Array::vector(std::vector<float>(c->out_channels, 0.0f)));
    }
    store.put(kChannelOrderEntry, Array::scalar(spec.channel_order == ChannelOrder::rgb ? 0.0f : 1.0f));
    return store;
}

Network::Network(NetworkSpec spec, const WeightStore& weights) : spec_(std::move(spec)) {
    spec_.validate();
    if (const Array* order = weights.find(kChannelOrderEntry)) {
        const bool bgr = !order->values.empty() && order->values[0] != 0.0f;
        if (bgr != (spec_.channel_order == ChannelOrder::bgr)) {
            throw ConfigError("weights were exported for " + std::string(bgr ? "BGR" : "RGB") +
                              " input but network '" + spec_.name + "' expects the other order");
        }
    }
    bound_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const auto* c = std::get_if<ConvSpec>(&spec_.layers[i].params);
        if (!c) continue;
        const std::size_t in_g = c->in_channels / c->groups;
        const Array* w = weights.find(c->weights);
        if (!w) throw ConfigError("missing weight binding '" + c->weights + "'");
        const std::vector<std::uint32_t> want = {
            static_cast<std::uint32_t>(c->out_channels), static_cast<std::uint32_t>(c->kernel),
            static_cast<std::uint32_t>(c->kernel), static_cast<std::uint32_t>(in_g)};
        if (w->dims != want) throw ConfigError("weight binding '" + c->weights + "' has the wrong shape");
        const Array* b = weights.find(c->bias);
        if (!b) throw ConfigError("missing weight binding '" + c->bias + "'");
        if (b->values.size() != c->out_channels) {
            throw ConfigError("weight binding '" + c->bias + "' has the wrong shape");
        }
        if (!all_finite(w->values) || !all_finite(b->values)) {
            throw NumericError("weights of layer '" + spec_.layers[i].name + "' are not finite");
        }
        bound_[i] = BoundConv{ConvKernels(c->out_channels, c->kernel, c->kernel, in_g, w->values), b->values};
    }
}

void Network::set_lrn_mode(ExpMode mode) {
    for (auto& layer : spec_.layers) {
        if (auto* l = std::get_if<LrnSpec>(&layer.params)) l->mode = mode;
    }
}

Tensor3 Network::forward(const Tensor3& image, std::vector<LayerTiming>* timings) const {
    if (image.channels() != spec_.input_channels) {
        throw DimensionError("network '" + spec_.name + "' expects " + std::to_string(spec_.input_channels) +
                             " input channels, got " + std::to_string(image.channels()));
    }
    if (timings) timings->clear();
    // Images arrive in RGB order.
    Tensor3 x = image;
    if (spec_.channel_order == ChannelOrder::bgr && x.channels() == 3) {
        auto v = x.data();
        for (std::size_t p = 0; p < v.size(); p += 3) std::swap(v[p], v[p + 2]);
    }
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& layer = spec_.layers[i];
        const auto start = std::chrono::steady_clock::now();
        if (const auto* c = std::get_if<ConvSpec>(&layer.params)) {
            const Padding pad = c->padding ? Padding::uniform(*c->padding)
                                           : same_padding(x.height(), x.width(), c->kernel, c->stride);
            x = conv2d(x, bound_[i]->kernels, bound_[i]->bias, c->stride, pad, c->groups);
        } else if (std::holds_alternative<ReluSpec>(layer.params)) {
            relu_inplace(x);
        } else if (const auto* p = std::get_if<MaxPoolSpec>(&layer.params)) {
            const Padding pad = p->padding ? Padding::uniform(*p->padding)
                                           : same_padding(x.height(), x.width(), p->window, p->stride);
            x = maxpool2d(x, p->window, p->stride, pad);
        } else if (const auto* n = std::get_if<LrnSpec>(&layer.params)) {
            x = lrn(x, n->n, n->k, n->alpha, n->beta, n->mode);
        }
        if (!all_finite(x.data())) throw NumericError("non-finite activations after layer '" + layer.name + "'");
        if (timings) {
            timings->push_back({layer.name, layer.is_conv(), std::chrono::steady_clock::now() - start});
        }
    }
    return x;
}

Tensor3 forward(const NetworkSpec& net, const WeightStore& weights, const Tensor3& image) {
    return Network(net, weights).forward(image);
}

}  // namespace facedet
