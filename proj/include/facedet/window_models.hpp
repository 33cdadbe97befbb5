#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "facedet/dfw.hpp"
#include "facedet/geometry.hpp"
#include "facedet/tensor.hpp"

namespace facedet {

inline constexpr std::size_t kFeatureStride = 16;
inline constexpr std::size_t kFeatureChannels = 256;
inline constexpr float kStdFloor = 1e-6f;

/// Window extent in feature cells: i rows by j columns.
struct WindowSize {
    std::size_t i = 0;
    std::size_t j = 0;

    std::size_t length(std::size_t channels = kFeatureChannels) const { return i * j * channels; }
    auto operator<=>(const WindowSize&) const = default;
};

/// Linear SVM for one window size plus the per-dimension statistics used to
/// standardise its input.
struct WindowModel {
    WindowSize size;
    std::vector<float> weights;
    float bias = 0.0f;
    std::vector<float> mean;
    std::vector<float> std;

    void validate(std::size_t channels = kFeatureChannels) const;
};

struct NmsParams {
    double overlap_thresh = 0.5;
    double big_score_gap = 0.5;
    double small_score_gap = 0.2;
    double containment_thresh = 0.7;

    void validate() const;
};

struct ModelBank {
    std::vector<WindowModel> models;
    double detection_threshold = 1.0;
    NmsParams nms;

    const WindowModel* find(WindowSize size) const;
    void validate() const;
};

/// Best placement of one window model on a feature map.
struct Candidate {
    WindowSize window;
    std::size_t r = 0;
    std::size_t c = 0;
    double score = 0.0;
    BoundingBox box;
};

// Heights 9..23 and widths 8..20, both in steps of 2, height-major ascending.
std::vector<WindowSize> window_grid();

std::vector<float> flatten_patch(const Tensor3& feature, std::size_t r, std::size_t c, WindowSize size);

double score_window(const WindowModel& model, const Tensor3& feature, std::size_t r, std::size_t c);

struct Placement {
    std::size_t r = 0;
    std::size_t c = 0;
    double score = 0.0;
};

/// Exhaustive argmax of score_window over all placements. Ties go to the
/// smallest r, then the smallest c. nullopt when the window does not fit.
std::optional<Placement> best_position(const WindowModel& model, const Tensor3& feature);

BoundingBox map_to_image(WindowSize window, std::size_t r, std::size_t c);

// Bank <-> DFW: "svm/i{I}j{J}/{weights,bias,mean,std}", "bank/threshold",
// "nms/{overlap_thresh,big_score_gap,small_score_gap,containment_thresh}".
WeightStore bank_to_store(const ModelBank& bank);
ModelBank bank_from_store(const WeightStore& store);

}  // namespace facedet
