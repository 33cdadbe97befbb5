#include "facedet/manifest.hpp"

#include <fstream>

#include "json.hpp"

namespace facedet {

using nlohmann::json;

namespace {

json box_json(const std::optional<BoundingBox>& b) {
    if (!b) return nullptr;
    return json::array({b->x, b->y, b->w, b->h});
}

std::optional<BoundingBox> parse_box(const json& j) {
    if (j.is_null()) return std::nullopt;
    if (!j.is_array() || j.size() != 4) throw FormatError("box must be [x, y, w, h] or null");
    BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!(b.w > 0.0 && b.h > 0.0)) throw FormatError("box must have positive width and height");
    return b;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(line);
        } catch (const Error& e) {
            throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

std::filesystem::path Manifest::resolve(const Annotation& a) const {
    const std::filesystem::path p(a.path);
    return p.is_absolute() ? p : base_dir / p;
}

std::string manifest_line(const Annotation& a) {
    json j;
    j["path"] = a.path;
    j["box"] = box_json(a.face);
    return j.dump();
}

Annotation parse_manifest_line(const std::string& line) {
    try {
        const json j = json::parse(line);
        Annotation a;
        a.path = j.at("path").get<std::string>();
        if (a.path.empty()) throw FormatError("empty path");
        a.face = j.contains("box") ? parse_box(j.at("box")) : std::nullopt;
        return a;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest line: ") + e.what());
    }
}

Manifest read_manifest(const std::filesystem::path& path) {
    Manifest m;
    m.base_dir = path.parent_path();
    for_each_line(path, [&](const std::string& line) { m.items.push_back(parse_manifest_line(line)); });
    return m;
}

void write_manifest(const std::vector<Annotation>& items, const std::filesystem::path& path) {
    std::vector<std::string> lines;
    for (const auto& a : items) lines.push_back(manifest_line(a));
    write_lines(path, lines);
}

std::string detection_line(const DetectionRecord& r) {
    json j;
    j["path"] = r.path;
    j["present"] = r.detection.present;
    j["box"] = box_json(r.detection.box);
    j["score"] = r.detection.score ? json(*r.detection.score) : json(nullptr);
    return j.dump();
}

DetectionRecord parse_detection_line(const std::string& line) {
    try {
        const json j = json::parse(line);
        DetectionRecord r;
        r.path = j.at("path").get<std::string>();
        r.detection.present = j.value("present", false);
        r.detection.box = j.contains("box") ? parse_box(j.at("box")) : std::nullopt;
        if (j.contains("score") && !j.at("score").is_null()) r.detection.score = j.at("score").get<double>();
        if (r.detection.box.has_value() != r.detection.score.has_value()) {
            throw FormatError("detection box and score must both be present or both null");
        }
        if (r.detection.present && !r.detection.box) throw FormatError("present detection without a box");
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("detection line: ") + e.what());
    }
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
    std::vector<DetectionRecord> out;
    for_each_line(path, [&](const std::string& line) { out.push_back(parse_detection_line(line)); });
    return out;
}

void write_detections(const std::vector<DetectionRecord>& records, const std::filesystem::path& path) {
    std::vector<std::string> lines;
    for (const auto& r : records) lines.push_back(detection_line(r));
    write_lines(path, lines);
}

}  // namespace facedet
