#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lightcone {

/// Square grayscale image, row-major, intensities in [0, 1].
struct Frame {
    std::size_t side = 0;
    std::vector<double> pixels;

    Frame() = default;
    explicit Frame(std::size_t s, double fill = 0.0) : side(s), pixels(s * s, fill) {}
    Frame(std::size_t s, std::vector<double> px);

    double& at(std::size_t r, std::size_t c) { return pixels[r * side + c]; }
    double at(std::size_t r, std::size_t c) const { return pixels[r * side + c]; }

    /// Sum of intensities.
    double mass() const;
    /// Intensity-weighted (x, y) = (column, row) centre.
    std::pair<double, double> centroid() const;

    friend bool operator==(const Frame&, const Frame&) = default;
};

std::uint8_t quantize(double v);
inline double dequantize(std::uint8_t q) { return q / 255.0; }

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(std::size_t width, std::size_t height, std::span<const std::uint8_t> gray);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

/// Frames composed row-major into a grid with 1-pixel separators of value
/// `separator`. Rows may have different lengths; missing cells stay blank.
void write_pgm_grid(const std::filesystem::path& path, const std::vector<std::vector<Frame>>& rows,
                    std::size_t side, double separator = 0.5);

/// Reads a P5 file written by write_pgm.
Frame read_pgm(const std::filesystem::path& path);

}  // namespace lightcone
