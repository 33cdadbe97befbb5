#include "facedet/window_models.hpp"

#include <cmath>
#include <string>

#include "facedet/dot.hpp"

namespace facedet {

namespace detail {

namespace {

using f64x8 = double __attribute__((vector_size(64)));
using f32x8 = float __attribute__((vector_size(32)));

double hsum(const f64x8& v) {
    return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

}  // namespace

double dot_f64_f32(const double* a, const float* x, std::size_t n) {
    f64x8 acc{};
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        f64x8 av;
        f32x8 xv;
        __builtin_memcpy(&av, a + k, sizeof av);
        __builtin_memcpy(&xv, x + k, sizeof xv);
        acc = acc + av * __builtin_convertvector(xv, f64x8);
    }
    double sum = hsum(acc);
    for (; k < n; ++k) sum += a[k] * static_cast<double>(x[k]);
    return sum;
}

double dot_f32_f32(const float* a, const float* x, std::size_t n) {
    f64x8 acc{};
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        f32x8 av, xv;
        __builtin_memcpy(&av, a + k, sizeof av);
        __builtin_memcpy(&xv, x + k, sizeof xv);
        acc = acc + __builtin_convertvector(av, f64x8) * __builtin_convertvector(xv, f64x8);
    }
    double sum = hsum(acc);
    for (; k < n; ++k) sum += static_cast<double>(a[k]) * static_cast<double>(x[k]);
    return sum;
}

}  // namespace detail

namespace {

std::string window_tag(WindowSize s) { return "i" + std::to_string(s.i) + "j" + std::to_string(s.j); }

void check_fits(const Tensor3& feature, std::size_t r, std::size_t c, WindowSize size) {
    if (size.i == 0 || size.j == 0) throw BoundsError("window must be at least 1x1");
    if (r + size.i > feature.height() || c + size.j > feature.width()) {
        throw BoundsError("patch " + window_tag(size) + " at (" + std::to_string(r) + ", " + std::to_string(c) +
                          ") exceeds feature map " + std::to_string(feature.height()) + "x" +
                          std::to_string(feature.width()));
    }
}

// Standardisation folded into the weights: score = offset + sum(scaled * x)
// with scaled = w / std and offset = bias - sum(w * mean / std).
struct FoldedModel {
    std::vector<double> scaled;
    double offset = 0.0;

    explicit FoldedModel(const WindowModel& m) : scaled(m.weights.size()) {
        double shift = 0.0;
        for (std::size_t k = 0; k < m.weights.size(); ++k) {
            scaled[k] = static_cast<double>(m.weights[k]) / static_cast<double>(m.std[k]);
            shift += scaled[k] * static_cast<double>(m.mean[k]);
        }
        offset = static_cast<double>(m.bias) - shift;
    }

    double score(const Tensor3& feature, std::size_t r, std::size_t c, WindowSize size) const {
        const std::size_t ch = feature.channels();
        const std::size_t row_len = size.j * ch;
        double sum = offset;
        for (std::size_t di = 0; di < size.i; ++di) {
            const float* x = feature.data().data() + feature.offset(r + di, c, 0);
            sum += detail::dot_f64_f32(scaled.data() + di * row_len, x, row_len);
        }
        return sum;
    }
};

void check_model_fits_feature(const WindowModel& model, const Tensor3& feature) {
    if (model.weights.size() != model.size.length(feature.channels())) {
        throw DimensionError("model " + window_tag(model.size) + " expects " + std::to_string(model.weights.size()) +
                             " features, a patch of this map has " +
                             std::to_string(model.size.length(feature.channels())));
    }
}

}  // namespace

void WindowModel::validate(std::size_t channels) const {
    const std::size_t n = size.length(channels);
    if (n == 0) throw DimensionError("window model has an empty window");
    if (weights.size() != n || mean.size() != n || std.size() != n) {
        throw DimensionError("window model " + window_tag(size) + ": weights/mean/std must all have length " +
                             std::to_string(n));
    }
    for (float s : std) {
        if (!(s >= kStdFloor)) throw NumericError("window model " + window_tag(size) + ": std below floor");
    }
}

void NmsParams::validate() const {
    if (!(overlap_thresh > 0.0 && overlap_thresh < 1.0)) throw ConfigError("nms overlap_thresh must be in (0, 1)");
    if (!(big_score_gap >= 0.0) || !(small_score_gap >= 0.0)) throw ConfigError("nms score gaps must be >= 0");
    if (!(containment_thresh > 0.0 && containment_thresh <= 1.0)) {
        throw ConfigError("nms containment_thresh must be in (0, 1]");
    }
}

const WindowModel* ModelBank::find(WindowSize size) const {
    for (const auto& m : models) {
        if (m.size == size) return &m;
    }
    return nullptr;
}

void ModelBank::validate() const {
    nms.validate();
    for (std::size_t a = 0; a < models.size(); ++a) {
        models[a].validate();
        for (std::size_t b = a + 1; b < models.size(); ++b) {
            if (models[a].size == models[b].size) {
                throw ConfigError("model bank holds two models for window " + window_tag(models[a].size));
            }
        }
    }
}

std::vector<WindowSize> window_grid() {
    std::vector<WindowSize> grid;
    for (std::size_t i = 9; i <= 23; i += 2) {
        for (std::size_t j = 8; j <= 20; j += 2) grid.push_back({i, j});
    }
    return grid;
}

std::vector<float> flatten_patch(const Tensor3& feature, std::size_t r, std::size_t c, WindowSize size) {
    check_fits(feature, r, c, size);
    const std::size_t row_len = size.j * feature.channels();
    std::vector<float> out;
    out.reserve(size.i * row_len);
    for (std::size_t di = 0; di < size.i; ++di) {
        const float* row = feature.data().data() + feature.offset(r + di, c, 0);
        out.insert(out.end(), row, row + row_len);
    }
    return out;
}

double score_window(const WindowModel& model, const Tensor3& feature, std::size_t r, std::size_t c) {
    check_fits(feature, r, c, model.size);
    check_model_fits_feature(model, feature);
    return FoldedModel(model).score(feature, r, c, model.size);
}

std::optional<Placement> best_position(const WindowModel& model, const Tensor3& feature) {
    if (model.size.i > feature.height() || model.size.j > feature.width()) return std::nullopt;
    check_model_fits_feature(model, feature);
    const FoldedModel folded(model);
    Placement best;
    bool have = false;
    for (std::size_t r = 0; r + model.size.i <= feature.height(); ++r) {
        for (std::size_t c = 0; c + model.size.j <= feature.width(); ++c) {
            const double s = folded.score(feature, r, c, model.size);
            // Row-major scan: strict '>' keeps the earliest (smallest r, then c) maximum.
            if (!have || s > best.score) {
                best = {r, c, s};
                have = true;
            }
        }
    }
    return best;
}

BoundingBox map_to_image(WindowSize window, std::size_t r, std::size_t c) {
    constexpr auto s = static_cast<double>(kFeatureStride);
    return {s * static_cast<double>(c), s * static_cast<double>(r), s * static_cast<double>(window.j),
            s * static_cast<double>(window.i)};
}

WeightStore bank_to_store(const ModelBank& bank) {
    WeightStore store;
    store.put("bank/threshold", Array::scalar(static_cast<float>(bank.detection_threshold)));
    store.put("nms/overlap_thresh", Array::scalar(static_cast<float>(bank.nms.overlap_thresh)));
    store.put("nms/big_score_gap", Array::scalar(static_cast<float>(bank.nms.big_score_gap)));
    store.put("nms/small_score_gap", Array::scalar(static_cast<float>(bank.nms.small_score_gap)));
    store.put("nms/containment_thresh", Array::scalar(static_cast<float>(bank.nms.containment_thresh)));
    for (const auto& m : bank.models) {
        const std::string prefix = "svm/" + window_tag(m.size) + "/";
        store.put(prefix + "weights", Array::vector(m.weights));
        store.put(prefix + "bias", Array::scalar(m.bias));
        store.put(prefix + "mean", Array::vector(m.mean));
        store.put(prefix + "std", Array::vector(m.std));
    }
    return store;
}

ModelBank bank_from_store(const WeightStore& store) {
    ModelBank bank;
    bank.detection_threshold = store.scalar("bank/threshold");
    bank.nms.overlap_thresh = store.scalar("nms/overlap_thresh");
    bank.nms.big_score_gap = store.scalar("nms/big_score_gap");
    bank.nms.small_score_gap = store.scalar("nms/small_score_gap");
    bank.nms.containment_thresh = store.scalar("nms/containment_thresh");
    for (const WindowSize size : window_grid()) {
        const std::string prefix = "svm/" + window_tag(size) + "/";
        if (!store.contains(prefix + "weights")) continue;
        WindowModel m;
        m.size = size;
        m.weights = store.at(prefix + "weights").values;
        m.bias = store.scalar(prefix + "bias");
        m.mean = store.at(prefix + "mean").values;
        m.std = store.at(prefix + "std").values;
        bank.models.push_back(std::move(m));
    }
    bank.validate();
    return bank;
}

}  // namespace facedet
