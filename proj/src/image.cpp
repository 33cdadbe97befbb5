#include "facedet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "facedet/errors.hpp"

namespace facedet {

ImagePlane::ImagePlane(std::size_t r, std::size_t c, std::array<std::uint8_t, 3> fill) : rows(r), cols(c) {
    pixels.resize(r * c * 3);
    for (std::size_t i = 0; i < r * c; ++i) {
        pixels[i * 3 + 0] = fill[0];
        pixels[i * 3 + 1] = fill[1];
        pixels[i * 3 + 2] = fill[2];
    }
}

void write_ppm(const ImagePlane& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P6\n" << image.cols << ' ' << image.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

namespace {

std::size_t read_header_int(std::istream& in, const std::filesystem::path& path) {
    // Skip whitespace and '#' comments.
    for (;;) {
        const int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t') {
            in.get();
        } else {
            break;
        }
    }
    long long v = -1;
    in >> v;
    if (!in || v < 0) throw FormatError("malformed PPM header in '" + path.string() + "'");
    return static_cast<std::size_t>(v);
}

}  // namespace

ImagePlane read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw FormatError("'" + path.string() + "' is not a binary PPM (P6)");
    const std::size_t cols = read_header_int(in, path);
    const std::size_t rows = read_header_int(in, path);
    const std::size_t maxval = read_header_int(in, path);
    if (maxval != 255) throw FormatError("'" + path.string() + "': only maxval 255 is supported");
    if (rows == 0 || cols == 0) throw DimensionError("'" + path.string() + "' has a zero-sized image");
    in.get();  // single whitespace before the raster

    ImagePlane image;
    image.rows = rows;
    image.cols = cols;
    image.pixels.resize(rows * cols * 3);
    in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != image.pixels.size()) {
        throw FormatError("'" + path.string() + "': truncated raster");
    }
    return image;
}

ResizedShape resized_shape(std::size_t rows, std::size_t cols, std::size_t target_long_side) {
    if (rows == 0 || cols == 0) throw DimensionError("image has a zero-sized axis");
    const std::size_t long_side = std::max(rows, cols);
    if (long_side == target_long_side) return {rows, cols};
    const double scale = static_cast<double>(target_long_side) / static_cast<double>(long_side);
    auto scaled = [&](std::size_t n) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * scale)));
    };
    return {rows == long_side ? target_long_side : scaled(rows), cols == long_side ? target_long_side : scaled(cols)};
}

Tensor3 preprocess(const ImagePlane& image, std::size_t target_long_side) {
    if (image.rows == 0 || image.cols == 0) throw DimensionError("preprocess: zero-sized image");
    if (target_long_side == 0) throw DimensionError("preprocess: target long side must be >= 1");
    const auto [rows, cols] = resized_shape(image.rows, image.cols, target_long_side);

    Tensor3 out(rows, cols, 3);
    if (rows == image.rows && cols == image.cols) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const std::uint8_t* px = image.at(r, c);
                for (std::size_t k = 0; k < 3; ++k) out(r, c, k) = static_cast<float>(px[k]) - kChannelMeans[k];
            }
        }
        return out;
    }

    // Half-pixel-centre bilinear sampling, edges clamped.
    const double sy = static_cast<double>(image.rows) / static_cast<double>(rows);
    const double sx = static_cast<double>(image.cols) / static_cast<double>(cols);
    auto source = [](std::size_t dst, double scale, std::size_t limit, std::size_t& i0, std::size_t& i1, double& frac) {
        double pos = (static_cast<double>(dst) + 0.5) * scale - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(limit - 1));
        i0 = static_cast<std::size_t>(pos);
        i1 = std::min(i0 + 1, limit - 1);
        frac = pos - static_cast<double>(i0);
    };
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t y0, y1;
        double fy;
        source(r, sy, image.rows, y0, y1, fy);
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t x0, x1;
            double fx;
            source(c, sx, image.cols, x0, x1, fx);
            for (std::size_t k = 0; k < 3; ++k) {
                const double top = image.at(y0, x0)[k] * (1.0 - fx) + image.at(y0, x1)[k] * fx;
                const double bottom = image.at(y1, x0)[k] * (1.0 - fx) + image.at(y1, x1)[k] * fx;
                const double v = top * (1.0 - fy) + bottom * fy;
                out(r, c, k) = static_cast<float>(v) - kChannelMeans[k];
            }
        }
    }
    return out;
}

}  // namespace facedet
