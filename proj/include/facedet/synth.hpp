#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "facedet/image.hpp"
#include "facedet/manifest.hpp"
#include "facedet/rng.hpp"

namespace facedet {

/// Geometry of generated frames. Defaults match a 720p portrait frame after
/// resizing to 640 rows x 360 columns, with faces 175-350 rows tall.
struct SynthConfig {
    std::size_t rows = 640;
    std::size_t cols = 360;
    double face_fraction = 0.75;  // share of frames containing a face
    double min_face_height = 175.0;
    double max_face_height = 350.0;
    double min_aspect = 0.80;  // face width / height
    double max_aspect = 0.90;
};

struct SyntheticSample {
    std::string name;  // relative path, e.g. "images/0007.ppm"
    ImagePlane image;
    std::optional<BoundingBox> face;
};

/// Cluttered frames, some with a planted high-contrast face pattern (dark
/// frame, light fill, eye/nose/mouth blocks at fixed relative positions).
std::vector<SyntheticSample> generate_synthetic(std::size_t count, Rng& rng, const SynthConfig& cfg = {});

/// Writes images under out_dir/images and returns the manifest entries;
/// the manifest itself goes to out_dir/manifest.jsonl.
std::vector<Annotation> write_synthetic(const std::vector<SyntheticSample>& samples,
                                        const std::filesystem::path& out_dir);

}  // namespace facedet
