#pragma once

#include <optional>
#include <vector>

#include "facedet/image.hpp"
#include "facedet/network.hpp"
#include "facedet/window_models.hpp"

namespace facedet {

/// Final single-face decision for one image. The top surviving candidate is
/// kept even below threshold so evaluators can sweep their own threshold.
struct Detection {
    bool present = false;             // top.score >= bank threshold
    std::optional<BoundingBox> box;   // original-image pixels
    std::optional<double> score;
};

/// One candidate per model whose window fits the feature map, in bank order.
/// Throws ConfigError for an empty bank.
std::vector<Candidate> propose(const Tensor3& feature, const ModelBank& bank);

/// Two-stage suppression.
///  1. Score order: a survivor suppresses any lower candidate with
///     IoU >= overlap_thresh and score < survivor - big_score_gap.
///  2. Area order: a surviving larger box suppresses a smaller one when it
///     covers >= containment_thresh of the smaller's area and its score is
///     >= smaller - small_score_gap.
/// Survivors are returned by descending score.
std::vector<Candidate> nms_modified(const std::vector<Candidate>& candidates, const NmsParams& params);

/// Network and bank bound together for repeated detection.
class Detector {
public:
    Detector(Network network, ModelBank bank, std::size_t target_long_side = kDefaultLongSide);

    Detection detect(const ImagePlane& image) const;
    // Detection on an already preprocessed image; boxes stay in its pixels.
    Detection detect_preprocessed(const Tensor3& image) const;

    const Network& network() const { return network_; }
    const ModelBank& bank() const { return bank_; }
    ModelBank& bank() { return bank_; }

private:
    Network network_;
    ModelBank bank_;
    std::size_t target_long_side_;
};

Detection detect(const ImagePlane& image, const NetworkSpec& net, const WeightStore& weights,
                 const ModelBank& bank);

}  // namespace facedet
