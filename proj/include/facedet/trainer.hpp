#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facedet/manifest.hpp"
#include "facedet/network.hpp"
#include "facedet/rng.hpp"
#include "facedet/window_models.hpp"

namespace facedet {

struct TrainConfig {
    std::size_t t_p = 1;                  // positive selection threshold, cells
    std::size_t t_n = 2;                  // negative selection threshold, cells
    std::size_t negatives_per_image = 3;
    std::size_t min_positives = 20;
    std::size_t negative_batch = 500;     // n_ij
    std::size_t mining_cycles = 5;
    double lambda = 1e-4;
    std::size_t epochs = 50;              // subgradient steps per mining cycle
    std::uint64_t seed = 0;
    double detection_threshold = 1.0;
    NmsParams nms;

    void validate() const;
};

// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig parse_train_config(const std::string& json_text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
std::string train_config_to_json(const TrainConfig& cfg);

struct FeatureSize {
    std::size_t h = 0;  // rows
    std::size_t w = 0;  // columns
    bool operator==(const FeatureSize&) const = default;
};

/// Extent of a pixel box in conv5 cells: ceil(h / 16) x ceil(w / 16).
FeatureSize face_feature_size(const BoundingBox& box);

bool selects_positive(FeatureSize face, WindowSize window, std::size_t t_p);
bool selects_negative(FeatureSize face, WindowSize window, std::size_t t_n);

/// A training image reduced to its conv5 map; `face` is in the pixel frame
/// the map was computed from.
struct TrainingImage {
    const Tensor3* feature = nullptr;
    std::optional<BoundingBox> face;
};

/// Flattened patches of faces whose cell size is within t_p of the window on
/// both axes, anchored at the face's top-left cell and clamped to fit.
std::vector<std::vector<float>> harvest_positives(std::span<const TrainingImage> images, WindowSize window,
                                                  std::size_t t_p);

/// negatives_per_image uniform random patches from every face-free image and
/// every image whose face differs from the window by more than t_n on both
/// axes.
std::vector<std::vector<float>> harvest_negatives(std::span<const TrainingImage> images, WindowSize window,
                                                  std::size_t t_n, std::size_t negatives_per_image, Rng& rng);

struct NormStats {
    std::vector<float> mean;
    std::vector<float> std;  // population, floored at kStdFloor
};

NormStats norm_stats(std::span<const std::vector<float>> samples);

struct SampleSet {
    WindowSize window;
    std::vector<std::vector<float>> positives;
    std::vector<std::vector<float>> negative_pool;
};

struct SvmFit {
    WindowModel model;
    double initial_objective = 0.0;      // at zero weights, first training set
    double final_objective = 0.0;        // final weights, final training set
    std::size_t pool_positive_after_first_cycle = 0;  // pool negatives scoring > 0
    std::size_t pool_positive_final = 0;
    std::size_t negatives_seen = 0;
};

/// Linear SVM with batched hard-negative mining. Returns nullopt when the
/// window must be discarded (too few positives or no negatives).
std::optional<SvmFit> train_svm(const SampleSet& samples, const TrainConfig& cfg);

struct WindowReport {
    WindowSize window;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    bool trained = false;
};

struct TrainReport {
    std::vector<WindowReport> windows;
};

/// Full training run: one forward pass per image, then harvest and fit each
/// window in the grid. Throws TrainingError when every window is discarded.
ModelBank train_bank(const Manifest& manifest, const Network& network, const TrainConfig& cfg,
                     TrainReport* report = nullptr, std::size_t target_long_side = kDefaultLongSide);

/// Same, from precomputed training images.
ModelBank train_bank(std::span<const TrainingImage> images, const TrainConfig& cfg, TrainReport* report = nullptr);

}  // namespace facedet
