#pragma once

#include <vector>

#include "binkit/image.hpp"

namespace binkit::classical {

/// Windowed mean/standard deviation per pixel, computed in the 8-bit
/// intensity domain [0,255] over a window centered at each pixel
/// (reflect-padded at borders).
struct LocalStats {
    int width = 0;
    int height = 0;
    int window_side = 0;
    std::vector<double> mean;
    std::vector<double> stddev;

    double m(int row, int col) const { return mean[static_cast<size_t>(row) * width + col]; }
    double s(int row, int col) const { return stddev[static_cast<size_t>(row) * width + col]; }
};

/// Per-pixel threshold surface, 8-bit intensity domain.
struct ThresholdMap {
    int width = 0;
    int height = 0;
    std::vector<double> t;
};

/// Quantizes a normalized intensity back to the 8-bit domain.
inline int quantize8(float p) {
    const float clamped = p < 0.0f ? 0.0f : (p > 1.0f ? 1.0f : p);
    return static_cast<int>(clamped * 255.0f + 0.5f);
}

/// Global threshold level in [0,255] maximizing the inter-class variance
/// of the two histogram classes {<= t} and {> t}; ties resolved toward the
/// smallest level. A constant image yields its own value.
int otsu_threshold(const GrayImage& img);

/// Foreground iff quantized intensity <= level.
BinaryMask apply_global(const GrayImage& img, int level);

/// Otsu end to end; a constant (zero-contrast) image maps to all background.
BinaryMask binarize_otsu(const GrayImage& img);

/// O(1)-per-pixel windowed stats via integral images of intensity and
/// squared intensity (64-bit accumulation). window_side must be odd, >= 3.
LocalStats local_stats(const GrayImage& img, int window_side);

/// T = m + k * s
ThresholdMap threshold_niblack(const LocalStats& stats, double k);

/// T = m * (1 + k * (s / R - 1)), R > 0
ThresholdMap threshold_sauvola(const LocalStats& stats, double k, double R);

/// T = (1 - k) * m + k * M + k * (s / S) * (m - M) with M the image minimum
/// and S the maximum windowed deviation. Falls back to T = m when S = 0.
ThresholdMap threshold_wolf(const LocalStats& stats, const GrayImage& img, double k);

/// Foreground iff quantized intensity < T (strict).
BinaryMask apply_threshold_map(const GrayImage& img, const ThresholdMap& tmap);

/// Default parameters surfaced through the CLI.
inline constexpr double kNiblackK = -0.2;
inline constexpr double kSauvolaK = 0.5;
inline constexpr double kSauvolaR = 128.0;
inline constexpr double kWolfK = 0.5;
inline constexpr int kLocalWindowSide = 25;

}  // namespace binkit::classical
