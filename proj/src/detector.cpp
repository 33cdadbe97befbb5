#include "facedet/detector.hpp"

#include <algorithm>
#include <numeric>

#include "facedet/parallel.hpp"

namespace facedet {

std::vector<Candidate> propose(const Tensor3& feature, const ModelBank& bank) {
    if (bank.models.empty()) throw ConfigError("model bank is empty");
    std::vector<std::optional<Candidate>> slots(bank.models.size());
    parallel_for(bank.models.size(), [&](std::size_t m) {
        const WindowModel& model = bank.models[m];
        if (auto p = best_position(model, feature)) {
            slots[m] = Candidate{model.size, p->r, p->c, p->score, map_to_image(model.size, p->r, p->c)};
        }
    });
    std::vector<Candidate> out;
    for (auto& s : slots) {
        if (s) out.push_back(*s);
    }
    return out;
}

std::vector<Candidate> nms_modified(const std::vector<Candidate>& candidates, const NmsParams& params) {
    const std::size_t n = candidates.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return candidates[a].score > candidates[b].score; });

    std::vector<bool> suppressed(n, false);
    for (std::size_t a = 0; a < n; ++a) {
        if (suppressed[order[a]]) continue;
        const Candidate& keep = candidates[order[a]];
        for (std::size_t b = a + 1; b < n; ++b) {
            const Candidate& other = candidates[order[b]];
            if (suppressed[order[b]]) continue;
            if (iou(keep.box, other.box) >= params.overlap_thresh &&
                other.score < keep.score - params.big_score_gap) {
                suppressed[order[b]] = true;
            }
        }
    }

    // Stage 2 walks stage-1 survivors from the largest box down. A box still
    // alive when reached can only have been tested against larger boxes, so it
    // survives to the output.
    std::vector<std::size_t> by_area;
    for (std::size_t idx : order) {
        if (!suppressed[idx]) by_area.push_back(idx);
    }
    std::stable_sort(by_area.begin(), by_area.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].box.area() > candidates[b].box.area();
    });
    for (std::size_t a = 0; a < by_area.size(); ++a) {
        if (suppressed[by_area[a]]) continue;
        const Candidate& large = candidates[by_area[a]];
        for (std::size_t b = a + 1; b < by_area.size(); ++b) {
            const Candidate& small = candidates[by_area[b]];
            if (suppressed[by_area[b]] || !(small.box.area() < large.box.area())) continue;
            const double covered = intersection_area(large.box, small.box) / small.box.area();
            if (covered >= params.containment_thresh && large.score >= small.score - params.small_score_gap) {
                suppressed[by_area[b]] = true;
            }
        }
    }

    std::vector<Candidate> out;
    for (std::size_t idx : order) {
        if (!suppressed[idx]) out.push_back(candidates[idx]);
    }
    return out;
}

Detector::Detector(Network network, ModelBank bank, std::size_t target_long_side)
    : network_(std::move(network)), bank_(std::move(bank)), target_long_side_(target_long_side) {
    bank_.validate();
    if (network_.spec().output_channels() != kFeatureChannels) {
        throw ConfigError("detector needs a network producing " + std::to_string(kFeatureChannels) + " channels");
    }
}

Detection Detector::detect_preprocessed(const Tensor3& image) const {
    const Tensor3 feature = network_.forward(image);
    const std::vector<Candidate> survivors = nms_modified(propose(feature, bank_), bank_.nms);
    Detection d;
    if (survivors.empty()) return d;
    const Candidate& top = survivors.front();
    d.box = top.box;
    d.score = top.score;
    d.present = top.score >= bank_.detection_threshold;
    return d;
}

Detection Detector::detect(const ImagePlane& image) const {
    const Tensor3 input = preprocess(image, target_long_side_);
    Detection d = detect_preprocessed(input);
    if (d.box) {
        const double sy = static_cast<double>(image.rows) / static_cast<double>(input.height());
        const double sx = static_cast<double>(image.cols) / static_cast<double>(input.width());
        d.box = BoundingBox{d.box->x * sx, d.box->y * sy, d.box->w * sx, d.box->h * sy};
    }
    return d;
}

Detection detect(const ImagePlane& image, const NetworkSpec& net, const WeightStore& weights,
                 const ModelBank& bank) {
    return Detector(Network(net, weights), bank).detect(image);
}

}  // namespace facedet
