#include "facedet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace facedet {

namespace {

using Color = std::array<int, 3>;

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

Color random_color(Rng& rng) {
    return {static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256))};
}

void fill_rect(ImagePlane& img, double x0, double y0, double x1, double y1, const Color& c) {
    const auto rs = static_cast<std::size_t>(std::clamp(std::lround(y0), 0L, static_cast<long>(img.rows)));
    const auto re = static_cast<std::size_t>(std::clamp(std::lround(y1), 0L, static_cast<long>(img.rows)));
    const auto cs = static_cast<std::size_t>(std::clamp(std::lround(x0), 0L, static_cast<long>(img.cols)));
    const auto ce = static_cast<std::size_t>(std::clamp(std::lround(x1), 0L, static_cast<long>(img.cols)));
    for (std::size_t r = rs; r < re; ++r) {
        for (std::size_t col = cs; col < ce; ++col) {
            std::uint8_t* px = img.at(r, col);
            for (int k = 0; k < 3; ++k) px[k] = clamp_u8(c[k]);
        }
    }
}

void fill_ellipse(ImagePlane& img, double cx, double cy, double rx, double ry, const Color& c) {
    const long r0 = std::max(0L, static_cast<long>(std::floor(cy - ry)));
    const long r1 = std::min(static_cast<long>(img.rows) - 1, static_cast<long>(std::ceil(cy + ry)));
    const long c0 = std::max(0L, static_cast<long>(std::floor(cx - rx)));
    const long c1 = std::min(static_cast<long>(img.cols) - 1, static_cast<long>(std::ceil(cx + rx)));
    for (long r = r0; r <= r1; ++r) {
        for (long col = c0; col <= c1; ++col) {
            const double dy = (static_cast<double>(r) + 0.5 - cy) / ry;
            const double dx = (static_cast<double>(col) + 0.5 - cx) / rx;
            if (dx * dx + dy * dy > 1.0) continue;
            std::uint8_t* px = img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(col));
            for (int k = 0; k < 3; ++k) px[k] = clamp_u8(c[k]);
        }
    }
}

void draw_background(ImagePlane& img, Rng& rng) {
    const Color top = random_color(rng);
    const Color bottom = random_color(rng);
    for (std::size_t r = 0; r < img.rows; ++r) {
        const double t = static_cast<double>(r) / static_cast<double>(img.rows);
        for (std::size_t c = 0; c < img.cols; ++c) {
            std::uint8_t* px = img.at(r, c);
            for (int k = 0; k < 3; ++k) px[k] = clamp_u8(static_cast<int>(std::lround(top[k] * (1.0 - t) + bottom[k] * t)));
        }
    }
    const std::size_t shapes = 6 + rng.below(12);
    const double w = static_cast<double>(img.cols), h = static_cast<double>(img.rows);
    for (std::size_t s = 0; s < shapes; ++s) {
        const Color c = random_color(rng);
        const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
        const double rx = rng.uniform(10.0, w / 3.0), ry = rng.uniform(10.0, h / 4.0);
        if (rng.below(2) == 0) {
            fill_rect(img, cx - rx, cy - ry, cx + rx, cy + ry, c);
        } else {
            fill_ellipse(img, cx, cy, rx, ry, c);
        }
    }
}

void add_noise(ImagePlane& img, Rng& rng) {
    for (auto& v : img.pixels) v = clamp_u8(static_cast<int>(v) + static_cast<int>(rng.below(21)) - 10);
}

// Face pattern at fixed relative positions inside the box.
void draw_face(ImagePlane& img, const BoundingBox& b, Rng& rng) {
    auto jitter = [&](const Color& c) {
        const int d = static_cast<int>(rng.below(31)) - 15;
        return Color{c[0] + d, c[1] + d, c[2] + d};
    };
    auto rect = [&](double fx0, double fy0, double fx1, double fy1, const Color& c) {
        fill_rect(img, b.x + fx0 * b.w, b.y + fy0 * b.h, b.x + fx1 * b.w, b.y + fy1 * b.h, c);
    };
    const double frame = std::max(3.0, 0.06 * std::min(b.w, b.h));
    fill_rect(img, b.x, b.y, b.x + b.w, b.y + b.h, jitter({45, 30, 25}));
    fill_rect(img, b.x + frame, b.y + frame, b.x + b.w - frame, b.y + b.h - frame, jitter({225, 185, 150}));
    rect(0.10, 0.08, 0.90, 0.20, jitter({70, 45, 30}));     // hair band
    rect(0.18, 0.30, 0.40, 0.42, jitter({250, 250, 250}));  // eyes
    rect(0.60, 0.30, 0.82, 0.42, jitter({250, 250, 250}));
    rect(0.25, 0.33, 0.33, 0.40, {20, 20, 60});             // pupils
    rect(0.67, 0.33, 0.75, 0.40, {20, 20, 60});
    rect(0.46, 0.42, 0.54, 0.62, jitter({175, 120, 100}));  // nose
    rect(0.28, 0.70, 0.72, 0.78, jitter({150, 40, 40}));    // mouth
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic(std::size_t count, Rng& rng, const SynthConfig& cfg) {
    std::vector<SyntheticSample> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        SyntheticSample s;
        char name[32];
        std::snprintf(name, sizeof name, "images/%04zu.ppm", n);
        s.name = name;
        s.image = ImagePlane(cfg.rows, cfg.cols);
        draw_background(s.image, rng);
        if (rng.uniform() < cfg.face_fraction) {
            double h = std::round(rng.uniform(cfg.min_face_height, cfg.max_face_height));
            double w = std::round(h * rng.uniform(cfg.min_aspect, cfg.max_aspect));
            h = std::min(h, static_cast<double>(cfg.rows));
            w = std::min(w, static_cast<double>(cfg.cols));
            const double x = static_cast<double>(rng.below(cfg.cols - static_cast<std::size_t>(w) + 1));
            const double y = static_cast<double>(rng.below(cfg.rows - static_cast<std::size_t>(h) + 1));
            s.face = BoundingBox{x, y, w, h};
            draw_face(s.image, *s.face, rng);
        }
        add_noise(s.image, rng);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Annotation> write_synthetic(const std::vector<SyntheticSample>& samples,
                                        const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "images");
    std::vector<Annotation> manifest;
    for (const auto& s : samples) {
        write_ppm(s.image, out_dir / s.name);
        manifest.push_back({s.name, s.face});
    }
    write_manifest(manifest, out_dir / "manifest.jsonl");
    return manifest;
}

}  // namespace facedet
