#include "binkit/classical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>

namespace binkit::classical {

int otsu_threshold(const GrayImage& img) {
    if (img.empty()) throw std::invalid_argument("otsu_threshold: empty image");

    uint64_t hist[256] = {};
    for (const float p : img.pixels) ++hist[quantize8(p)];

    const uint64_t total = img.pixel_count();
    uint64_t total_sum = 0;
    for (int v = 0; v < 256; ++v) total_sum += hist[v] * static_cast<uint64_t>(v);

    int best_t = -1;
    double best_var = -1.0;
    uint64_t n0 = 0, s0 = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += hist[t];
        s0 += hist[t] * static_cast<uint64_t>(t);
        const uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = static_cast<double>(s0) / static_cast<double>(n0);
        const double mu1 = static_cast<double>(total_sum - s0) / static_cast<double>(n1);
        const double between = static_cast<double>(n0) * static_cast<double>(n1) * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_var) {
            best_var = between;
            best_t = t;
        }
    }

    if (best_t < 0) {
        // Single occupied bin: no split exists, report the constant itself.
        for (int v = 0; v < 256; ++v)
            if (hist[v] > 0) return v;
    }
    return best_t;
}

BinaryMask apply_global(const GrayImage& img, int level) {
    BinaryMask mask(img.width, img.height);
    for (size_t i = 0; i < img.pixel_count(); ++i)
        mask.labels[i] = quantize8(img.pixels[i]) <= level ? 1 : 0;
    return mask;
}

BinaryMask binarize_otsu(const GrayImage& img) {
    const int level = otsu_threshold(img);
    const int lo = quantize8(*std::min_element(img.pixels.begin(), img.pixels.end()));
    const int hi = quantize8(*std::max_element(img.pixels.begin(), img.pixels.end()));
    if (lo == hi) return BinaryMask(img.width, img.height, false);  // no contrast
    return apply_global(img, level);
}

LocalStats local_stats(const GrayImage& img, int window_side) {
    if (window_side < 3 || window_side % 2 == 0)
        throw std::invalid_argument("local_stats: window side must be odd and >= 3");
    if (img.empty()) throw std::invalid_argument("local_stats: empty image");

    const int w = img.width, h = img.height;
    const int r = window_side / 2;

    // Quantized, reflect-padded copy; integrals are exact in 64-bit.
    const int pw = w + 2 * r, ph = h + 2 * r;
    std::vector<uint16_t> padded(static_cast<size_t>(pw) * ph);
    for (int y = 0; y < ph; ++y) {
        const int sy = reflect_index(y - r, h);
        for (int x = 0; x < pw; ++x)
            padded[static_cast<size_t>(y) * pw + x] =
                static_cast<uint16_t>(quantize8(img.at(sy, reflect_index(x - r, w))));
    }

    // Integral tables with a zero top row / left column.
    const size_t iw = static_cast<size_t>(pw) + 1;
    std::vector<uint64_t> sum(iw * (ph + 1), 0), sqsum(iw * (ph + 1), 0);
    for (int y = 0; y < ph; ++y) {
        uint64_t row = 0, row_sq = 0;
        for (int x = 0; x < pw; ++x) {
            const uint64_t v = padded[static_cast<size_t>(y) * pw + x];
            row += v;
            row_sq += v * v;
            sum[(y + 1) * iw + x + 1] = sum[y * iw + x + 1] + row;
            sqsum[(y + 1) * iw + x + 1] = sqsum[y * iw + x + 1] + row_sq;
        }
    }

    LocalStats stats;
    stats.width = w;
    stats.height = h;
    stats.window_side = window_side;
    stats.mean.resize(img.pixel_count());
    stats.stddev.resize(img.pixel_count());
    const double n = static_cast<double>(window_side) * window_side;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Window [y, y+side) x [x, x+side) in padded coordinates.
            const size_t y0 = y, y1 = y + window_side;
            const size_t x0 = x, x1 = x + window_side;
            const uint64_t s = sum[y1 * iw + x1] - sum[y0 * iw + x1] - sum[y1 * iw + x0] + sum[y0 * iw + x0];
            const uint64_t sq = sqsum[y1 * iw + x1] - sqsum[y0 * iw + x1] - sqsum[y1 * iw + x0] + sqsum[y0 * iw + x0];
            const double mean = static_cast<double>(s) / n;
            const double var = std::max(0.0, static_cast<double>(sq) / n - mean * mean);
            stats.mean[static_cast<size_t>(y) * w + x] = mean;
            stats.stddev[static_cast<size_t>(y) * w + x] = std::sqrt(var);
        }
    }
    return stats;
}

ThresholdMap threshold_niblack(const LocalStats& stats, double k) {
    ThresholdMap tmap{stats.width, stats.height, {}};
    tmap.t.resize(stats.mean.size());
    for (size_t i = 0; i < stats.mean.size(); ++i) tmap.t[i] = stats.mean[i] + k * stats.stddev[i];
    return tmap;
}

ThresholdMap threshold_sauvola(const LocalStats& stats, double k, double R) {
    if (R <= 0.0) throw std::invalid_argument("threshold_sauvola: R must be positive");
    ThresholdMap tmap{stats.width, stats.height, {}};
    tmap.t.resize(stats.mean.size());
    for (size_t i = 0; i < stats.mean.size(); ++i)
        tmap.t[i] = stats.mean[i] * (1.0 + k * (stats.stddev[i] / R - 1.0));
    return tmap;
}

ThresholdMap threshold_wolf(const LocalStats& stats, const GrayImage& img, double k) {
    if (img.width != stats.width || img.height != stats.height)
        throw std::invalid_argument("threshold_wolf: stats/image dimension mismatch");
    const double S = *std::max_element(stats.stddev.begin(), stats.stddev.end());
    ThresholdMap tmap{stats.width, stats.height, {}};
    tmap.t.resize(stats.mean.size());
    if (S <= 0.0) {
        std::cerr << "threshold_wolf: degenerate constant image, falling back to T = m\n";
        tmap.t = stats.mean;
        return tmap;
    }
    int min_q = 255;
    for (const float p : img.pixels) min_q = std::min(min_q, quantize8(p));
    const double M = static_cast<double>(min_q);
    for (size_t i = 0; i < stats.mean.size(); ++i) {
        const double m = stats.mean[i];
        tmap.t[i] = (1.0 - k) * m + k * M + k * (stats.stddev[i] / S) * (m - M);
    }
    return tmap;
}

BinaryMask apply_threshold_map(const GrayImage& img, const ThresholdMap& tmap) {
    if (img.width != tmap.width || img.height != tmap.height)
        throw std::invalid_argument("apply_threshold_map: dimension mismatch");
    BinaryMask mask(img.width, img.height);
    for (size_t i = 0; i < img.pixel_count(); ++i)
        mask.labels[i] = static_cast<double>(quantize8(img.pixels[i])) < tmap.t[i] ? 1 : 0;
    return mask;
}

}  // namespace binkit::classical
