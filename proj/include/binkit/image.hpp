#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace binkit {

/// Single-channel raster with intensities normalized to [0,1]
/// (value / 255 at the I/O boundary). Row-major storage.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    float at(int row, int col) const { return pixels[static_cast<size_t>(row) * width + col]; }
    float& at(int row, int col) { return pixels[static_cast<size_t>(row) * width + col]; }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    bool empty() const { return width <= 0 || height <= 0; }
};

/// Per-pixel foreground/background labels; true = foreground (ink).
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> labels;  // 1 = foreground, 0 = background

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), labels(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int row, int col) const { return labels[static_cast<size_t>(row) * width + col] != 0; }
    void set(int row, int col, bool fg) { labels[static_cast<size_t>(row) * width + col] = fg ? 1 : 0; }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

/// Disjoint tiling of a reflect-padded image into square windows.
/// Padded dims are the smallest multiples of window_side covering the
/// original extent; origins are (row, col) anchors in row-major order.
struct PatchGrid {
    int window_side = 0;
    int padded_width = 0;
    int padded_height = 0;
    std::vector<std::pair<int, int>> origins;
};

/// Mirror fold without repeating the edge pixel: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
inline int reflect_index(int q, int n) {
    if (n <= 1) return 0;
    const int period = 2 * (n - 1);
    q %= period;
    if (q < 0) q += period;
    return q < n ? q : period - q;
}

/// Reads a PGM (binary P5) or PNG (8-bit gray/RGB) file. Color input is
/// converted by luma weighting 0.299 R + 0.587 G + 0.114 B.
GrayImage load_gray(const std::string& path);

/// Writes an 8-bit P5 PGM, quantizing intensities with round(p * 255).
void save_gray(const GrayImage& img, const std::string& path);

/// Writes a mask as P5 with foreground = 0 (black), background = 255.
void save_mask(const BinaryMask& mask, const std::string& path);

/// Reads a mask back from a gray raster: foreground = intensity below 1/2.
BinaryMask load_mask(const std::string& path);

/// Splits an image into side x side windows covering the reflect-padded
/// extent. Window count is ceil(width/side) * ceil(height/side).
std::pair<PatchGrid, std::vector<GrayImage>> split_into_windows(const GrayImage& img, int side);

/// Same tiling applied to a mask (labels reflected like pixels).
std::pair<PatchGrid, std::vector<BinaryMask>> split_mask_into_windows(const BinaryMask& mask, int side);

/// Inverse of splitting: pastes windows at their origins and crops the
/// padded regions, so stitch(split(img)) == img exactly.
GrayImage stitch_windows(const PatchGrid& grid, const std::vector<GrayImage>& windows,
                         int out_width, int out_height);
BinaryMask stitch_mask_windows(const PatchGrid& grid, const std::vector<BinaryMask>& windows,
                               int out_width, int out_height);

}  // namespace binkit
