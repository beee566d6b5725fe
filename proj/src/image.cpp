#include "lightcone/image.hpp"

#include "lightcone/binary_io.hpp"
#include "lightcone/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lightcone {

Frame::Frame(std::size_t s, std::vector<double> px) : side(s), pixels(std::move(px)) {
    if (pixels.size() != side * side) throw DimensionMismatch("Frame: pixel count is not side^2");
}

double Frame::mass() const {
    double m = 0.0;
    for (double p : pixels) m += p;
    return m;
}

std::pair<double, double> Frame::centroid() const {
    double m = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const double v = at(r, c);
            m += v;
            cx += v * static_cast<double>(c);
            cy += v * static_cast<double>(r);
        }
    }
    if (m == 0.0) return {0.0, 0.0};
    return {cx / m, cy / m};
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string encode_pgm(std::size_t width, std::size_t height, std::span<const std::uint8_t> gray) {
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(gray.begin(), gray.end());
    return out;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
    std::vector<std::uint8_t> g(frame.pixels.size());
    std::transform(frame.pixels.begin(), frame.pixels.end(), g.begin(), quantize);
    io::write_text(path, encode_pgm(frame.side, frame.side, g));
}

void write_pgm_grid(const std::filesystem::path& path, const std::vector<std::vector<Frame>>& rows,
                    std::size_t side, double separator) {
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    cols = std::max<std::size_t>(cols, 1);
    const std::size_t nrows = std::max<std::size_t>(rows.size(), 1);
    const std::size_t width = cols * side + (cols + 1);
    const std::size_t height = nrows * side + (nrows + 1);
    std::vector<std::uint8_t> g(width * height, quantize(separator));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            const Frame& f = rows[i][j];
            if (f.side != side) throw DimensionMismatch("write_pgm_grid: frame side mismatch");
            const std::size_t y0 = 1 + i * (side + 1), x0 = 1 + j * (side + 1);
            for (std::size_t r = 0; r < side; ++r)
                for (std::size_t c = 0; c < side; ++c) g[(y0 + r) * width + x0 + c] = quantize(f.at(r, c));
        }
        for (std::size_t j = rows[i].size(); j < cols; ++j) {
            const std::size_t y0 = 1 + i * (side + 1), x0 = 1 + j * (side + 1);
            for (std::size_t r = 0; r < side; ++r)
                for (std::size_t c = 0; c < side; ++c) g[(y0 + r) * width + x0 + c] = 0;
        }
    }
    io::write_text(path, encode_pgm(width, height, g));
}

Frame read_pgm(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    std::string header(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(bytes.size(), 64)));
    std::istringstream in(header);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255 || w != h || w == 0) throw FormatError("unsupported PGM: " + path.string());
    const auto offset = static_cast<std::size_t>(in.tellg()) + 1;
    if (bytes.size() != offset + w * h) throw FormatError("truncated PGM: " + path.string());
    Frame f(w);
    for (std::size_t i = 0; i < w * h; ++i) f.pixels[i] = dequantize(bytes[offset + i]);
    return f;
}

}  // namespace lightcone
