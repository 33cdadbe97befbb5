#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "facedet/detector.hpp"
#include "facedet/geometry.hpp"

namespace facedet {

/// One dataset image with at most one face. `path` is the manifest's
/// string, resolved against the manifest's directory when read from disk.
struct Annotation {
    std::string path;
    std::optional<BoundingBox> face;

    bool operator==(const Annotation&) const = default;
};

struct Manifest {
    std::vector<Annotation> items;
    std::filesystem::path base_dir;  // directory relative paths resolve against

    std::filesystem::path resolve(const Annotation& a) const;
};

// JSONL, one {"path": str, "box": [x, y, w, h] | null} per line.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<Annotation>& items, const std::filesystem::path& path);
std::string manifest_line(const Annotation& a);
Annotation parse_manifest_line(const std::string& line);

struct DetectionRecord {
    std::string path;
    Detection detection;
};

// JSONL, one {"path": str, "present": bool, "box": [x, y, w, h] | null,
// "score": float | null} per line.
std::string detection_line(const DetectionRecord& r);
DetectionRecord parse_detection_line(const std::string& line);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);
void write_detections(const std::vector<DetectionRecord>& records, const std::filesystem::path& path);

}  // namespace facedet
