#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "binkit/classical.hpp"
#include "binkit/image.hpp"

using namespace binkit;
using namespace binkit::classical;

namespace {

GrayImage random_8bit_image(int w, int h, uint32_t seed) {
    std::mt19937 eng(seed);
    GrayImage img(w, h);
    for (auto& p : img.pixels) p = static_cast<float>(eng() % 256) / 255.0f;
    return img;
}

/// Exhaustive inter-class-variance maximizer over all 256 candidate
/// thresholds, smallest-tie rule; classes are {<= t} and {> t}.
int otsu_brute_force(const GrayImage& img) {
    uint64_t hist[256] = {};
    for (const float p : img.pixels) ++hist[quantize8(p)];

    double best = -1.0;
    int best_t = -1;
    for (int t = 0; t < 256; ++t) {
        uint64_t n0 = 0, s0 = 0, n1 = 0, s1 = 0;
        for (int v = 0; v <= t; ++v) {
            n0 += hist[v];
            s0 += hist[v] * static_cast<uint64_t>(v);
        }
        for (int v = t + 1; v < 256; ++v) {
            n1 += hist[v];
            s1 += hist[v] * static_cast<uint64_t>(v);
        }
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = static_cast<double>(s0) / static_cast<double>(n0);
        const double mu1 = static_cast<double>(s1) / static_cast<double>(n1);
        const double between =
            static_cast<double>(n0) * static_cast<double>(n1) * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    if (best_t < 0) {
        for (int v = 0; v < 256; ++v)
            if (hist[v]) return v;
    }
    return best_t;
}

/// Direct double-loop windowed mean/std with reflected borders.
void naive_stats(const GrayImage& img, int side, std::vector<double>& mean,
                 std::vector<double>& stddev) {
    const int r = side / 2;
    mean.assign(img.pixel_count(), 0.0);
    stddev.assign(img.pixel_count(), 0.0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double sum = 0.0, sq = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = reflect_index(y + dy, img.height);
                    const int xx = reflect_index(x + dx, img.width);
                    const double v = quantize8(img.at(yy, xx));
                    sum += v;
                    sq += v * v;
                }
            const double n = static_cast<double>(side) * side;
            const double m = sum / n;
            mean[static_cast<size_t>(y) * img.width + x] = m;
            stddev[static_cast<size_t>(y) * img.width + x] =
                std::sqrt(std::max(0.0, sq / n - m * m));
        }
}

}  // namespace

TEST_CASE("otsu matches the exhaustive oracle on random images") {
    for (uint32_t seed = 0; seed < 40; ++seed) {
        const GrayImage img = random_8bit_image(32, 32, 1000 + seed);
        REQUIRE(otsu_threshold(img) == otsu_brute_force(img));
    }
}

TEST_CASE("otsu on a perfectly bimodal 0/255 image picks t = 0") {
    GrayImage img(20, 1);
    for (int i = 0; i < 10; ++i) img.pixels[static_cast<size_t>(i)] = 0.0f;
    for (int i = 10; i < 20; ++i) img.pixels[static_cast<size_t>(i)] = 1.0f;
    CHECK(otsu_threshold(img) == 0);
    const BinaryMask mask = apply_global(img, 0);
    for (int i = 0; i < 10; ++i) CHECK(mask.labels[static_cast<size_t>(i)] == 1);
    for (int i = 10; i < 20; ++i) CHECK(mask.labels[static_cast<size_t>(i)] == 0);
}

TEST_CASE("otsu on a constant image returns the constant; mask all background") {
    GrayImage img(8, 8, 100.0f / 255.0f);
    CHECK(otsu_threshold(img) == 100);
    const BinaryMask mask = binarize_otsu(img);
    for (const auto l : mask.labels) CHECK(l == 0);
}

TEST_CASE("otsu rejects an empty image") {
    CHECK_THROWS(otsu_threshold(GrayImage()));
}

TEST_CASE("local stats on a constant image: m = c, s = 0") {
    GrayImage img(10, 7, 100.0f / 255.0f);
    const LocalStats stats = local_stats(img, 5);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 10; ++x) {
            CHECK(stats.m(y, x) == doctest::Approx(100.0));
            CHECK(stats.s(y, x) == doctest::Approx(0.0));
        }
}

TEST_CASE("3x3 stats over a 0/1 checkerboard interior follow parity") {
    GrayImage img(9, 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) img.at(y, x) = ((x + y) % 2 == 0) ? 1.0f / 255.0f : 0.0f;
    const LocalStats stats = local_stats(img, 3);
    // Interior pixel with value 1 has five 1s in its 3x3 window; value 0 has four.
    CHECK(stats.m(4, 4) == doctest::Approx(5.0 / 9.0));
    CHECK(stats.m(4, 5) == doctest::Approx(4.0 / 9.0));
}

TEST_CASE("integral-image stats equal the naive oracle") {
    std::vector<double> mean, stddev;
    for (uint32_t seed = 0; seed < 4; ++seed) {
        const GrayImage img = random_8bit_image(50, 43, 2000 + seed);
        for (const int side : {3, 15, 31}) {
            const LocalStats stats = local_stats(img, side);
            naive_stats(img, side, mean, stddev);
            for (size_t i = 0; i < mean.size(); ++i) {
                REQUIRE(std::fabs(stats.mean[i] - mean[i]) < 1e-6);
                REQUIRE(std::fabs(stats.stddev[i] - stddev[i]) < 1e-6);
            }
        }
    }
}

TEST_CASE("local_stats validates the window side") {
    const GrayImage img = random_8bit_image(10, 10, 1);
    CHECK_THROWS(local_stats(img, 4));
    CHECK_THROWS(local_stats(img, 0));
    CHECK_THROWS(local_stats(img, -3));
    CHECK_THROWS(local_stats(img, 1));
}

TEST_CASE("niblack formula: m=100 s=50 k=-0.2 gives T=90") {
    LocalStats stats;
    stats.width = stats.height = 1;
    stats.window_side = 3;
    stats.mean = {100.0};
    stats.stddev = {50.0};
    CHECK(threshold_niblack(stats, -0.2).t[0] == doctest::Approx(90.0));
    CHECK(threshold_niblack(stats, 0.0).t[0] == doctest::Approx(100.0));
}

TEST_CASE("sauvola formula: m=100 s=64 k=0.5 R=128 gives T=75") {
    LocalStats stats;
    stats.width = stats.height = 1;
    stats.window_side = 3;
    stats.mean = {100.0};
    stats.stddev = {64.0};
    CHECK(threshold_sauvola(stats, 0.5, 128.0).t[0] == doctest::Approx(75.0));
    // s = R collapses the factor to 1.
    stats.stddev = {128.0};
    CHECK(threshold_sauvola(stats, 0.5, 128.0).t[0] == doctest::Approx(100.0));
    CHECK(threshold_sauvola(stats, 0.0, 128.0).t[0] == doctest::Approx(100.0));
    CHECK_THROWS(threshold_sauvola(stats, 0.5, 0.0));
    CHECK_THROWS(threshold_sauvola(stats, 0.5, -1.0));
}

TEST_CASE("wolf formula: m=120 s=S M=10 k=0.5 gives T=120") {
    // Two-pixel image: one at the minimum 10, one at 120.
    GrayImage img(2, 1);
    img.pixels = {10.0f / 255.0f, 120.0f / 255.0f};
    LocalStats stats;
    stats.width = 2;
    stats.height = 1;
    stats.window_side = 3;
    stats.mean = {100.0, 120.0};
    stats.stddev = {30.0, 55.0};  // S = 55 at the second pixel
    const ThresholdMap tmap = threshold_wolf(stats, img, 0.5);
    CHECK(tmap.t[1] == doctest::Approx(0.5 * 120 + 0.5 * 10 + 0.5 * 1.0 * (120 - 10)));
    CHECK(tmap.t[1] == doctest::Approx(120.0));
    // k = 0 collapses to T = m.
    const ThresholdMap t0 = threshold_wolf(stats, img, 0.0);
    CHECK(t0.t[0] == doctest::Approx(100.0));
    CHECK(t0.t[1] == doctest::Approx(120.0));
}

TEST_CASE("wolf falls back to T=m on a constant image") {
    GrayImage img(4, 4, 0.5f);
    const LocalStats stats = local_stats(img, 3);
    const ThresholdMap tmap = threshold_wolf(stats, img, 0.5);
    for (const double t : tmap.t) CHECK(t == doctest::Approx(stats.mean[0]));
}

TEST_CASE("apply_threshold_map uses strict less-than") {
    GrayImage img(2, 1);
    img.pixels = {89.0f / 255.0f, 90.0f / 255.0f};
    ThresholdMap tmap;
    tmap.width = 2;
    tmap.height = 1;
    tmap.t = {90.0, 90.0};
    const BinaryMask mask = apply_threshold_map(img, tmap);
    CHECK(mask.labels[0] == 1);  // 89 < 90
    CHECK(mask.labels[1] == 0);  // 90 is not < 90

    ThresholdMap zero;
    zero.width = 2;
    zero.height = 1;
    zero.t = {0.0, 0.0};
    const BinaryMask none = apply_threshold_map(img, zero);
    CHECK(none.labels[0] == 0);
    CHECK(none.labels[1] == 0);

    ThresholdMap wrong;
    wrong.width = 3;
    wrong.height = 1;
    wrong.t = {0, 0, 0};
    CHECK_THROWS(apply_threshold_map(img, wrong));
}

TEST_CASE("k = 0 makes niblack, sauvola, and wolf masks identical") {
    const GrayImage img = random_8bit_image(40, 30, 77);
    const LocalStats stats = local_stats(img, 15);
    const BinaryMask a = apply_threshold_map(img, threshold_niblack(stats, 0.0));
    const BinaryMask b = apply_threshold_map(img, threshold_sauvola(stats, 0.0, 128.0));
    const BinaryMask c = apply_threshold_map(img, threshold_wolf(stats, img, 0.0));
    CHECK(a.labels == b.labels);
    CHECK(a.labels == c.labels);
}

TEST_CASE("raising a single threshold never turns foreground into background") {
    const GrayImage img = random_8bit_image(20, 20, 3);
    const LocalStats stats = local_stats(img, 5);
    ThresholdMap tmap = threshold_niblack(stats, -0.2);
    const BinaryMask before = apply_threshold_map(img, tmap);
    tmap.t[50] += 25.0;
    const BinaryMask after = apply_threshold_map(img, tmap);
    for (size_t i = 0; i < before.labels.size(); ++i)
        if (before.labels[i]) REQUIRE(after.labels[i] == 1);
}
