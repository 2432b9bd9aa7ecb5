#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "binkit/sae.hpp"
#include "support/tmpdir.hpp"

using namespace binkit;
using namespace binkit::sae;

namespace {

TopologySpec small_spec(Kind kind) {
    TopologySpec spec;
    spec.kind = kind;
    spec.window_side = 16;
    spec.filters = 4;
    spec.kernel_side = 3;
    spec.depth = 2;
    return spec;
}

GrayImage random_window(int side, uint32_t seed) {
    std::mt19937 eng(seed);
    GrayImage img(side, side);
    for (auto& p : img.pixels) p = static_cast<float>(eng() % 256) / 255.0f;
    return img;
}

}  // namespace

TEST_CASE("spec validation") {
    TopologySpec spec = small_spec(Kind::rednet);
    CHECK_NOTHROW(spec.validate());

    spec.window_side = 64;
    spec.depth = 7;
    CHECK_THROWS(spec.validate());  // 64 not divisible by 2^7

    spec = small_spec(Kind::cae);
    spec.kernel_side = 4;
    CHECK_THROWS(spec.validate());
    spec.kernel_side = 1;
    CHECK_THROWS(spec.validate());

    spec = small_spec(Kind::swwae);
    spec.filters = 0;
    CHECK_THROWS(spec.validate());

    spec = small_spec(Kind::rednet);
    spec.depth = 0;
    CHECK_THROWS(spec.validate());
}

TEST_CASE("default depth: 3 at 64, 5 at >= 128, shallower below") {
    CHECK(default_depth(64) == 3);
    CHECK(default_depth(128) == 5);
    CHECK(default_depth(256) == 5);
    CHECK(default_depth(384) == 5);
    CHECK(default_depth(32) == 2);
    CHECK(default_depth(16) == 1);
}

TEST_CASE("build_model is deterministic in the seed") {
    const TopologySpec spec = small_spec(Kind::rednet);
    const Model a = build_model(spec, 123);
    const Model b = build_model(spec, 123);
    const Model c = build_model(spec, 124);
    REQUIRE(a.params.size() == b.params.size());
    CHECK(a.snapshot_parameters() == b.snapshot_parameters());
    CHECK(a.snapshot_parameters() != c.snapshot_parameters());
}

TEST_CASE("parameter shapes and closed-form count") {
    // depth d, filters f, kernel k: encoder (f*1*k^2 + f) + (d-1)*(f*f*k^2 + f),
    // decoder d*(f*f*k^2 + f), output (1*f*k^2 + 1).
    const TopologySpec spec = small_spec(Kind::cae);
    const int f = spec.filters, k = spec.kernel_side, d = spec.depth;
    const size_t expected = (static_cast<size_t>(f) * k * k + f) +
                            static_cast<size_t>(d - 1) * (static_cast<size_t>(f) * f * k * k + f) +
                            static_cast<size_t>(d) * (static_cast<size_t>(f) * f * k * k + f) +
                            (static_cast<size_t>(f) * k * k + 1);
    CHECK(parameter_count(spec) == expected);

    const Model m = build_model(spec, 1);
    size_t total = 0;
    for (const auto& p : m.params) total += p.tensor->size();
    CHECK(total == expected);
    CHECK(m.params.size() == static_cast<size_t>(2 * (2 * d + 1)));
    CHECK(m.params.front().name == "enc1.w");
    CHECK(m.params.back().name == "out.b");
    // Output layer maps to exactly one channel.
    CHECK(m.params[m.params.size() - 2].tensor->dim(0) == 1);
}

TEST_CASE("forward preserves shape and the open unit interval for all kinds") {
    for (const Kind kind : {Kind::cae, Kind::swwae, Kind::rednet}) {
        const TopologySpec spec = small_spec(kind);
        const Model m = build_model(spec, 42);
        const GrayImage win = random_window(spec.window_side, 7);
        const ActivationMap a = forward_window(m, win);
        REQUIRE(a.side == spec.window_side);
        REQUIRE(a.values.size() == win.pixel_count());
        for (const float v : a.values) {
            REQUIRE(v > 0.0f);
            REQUIRE(v < 1.0f);
        }
    }
}

TEST_CASE("forward is deterministic for a fixed model and input") {
    const Model m = build_model(small_spec(Kind::swwae), 9);
    const GrayImage win = random_window(16, 3);
    const ActivationMap a = forward_window(m, win);
    const ActivationMap b = forward_window(m, win);
    CHECK(a.values == b.values);
}

TEST_CASE("all-zero parameters emit exactly 0.5 everywhere") {
    for (const Kind kind : {Kind::cae, Kind::swwae, Kind::rednet}) {
        Model m = build_model(small_spec(kind), 5);
        m.restore_parameters(std::vector<float>(parameter_count(m.spec), 0.0f));
        const ActivationMap a = forward_window(m, random_window(16, 11));
        for (const float v : a.values) REQUIRE(v == 0.5f);
        // ... which binarizes to all background at tau 0.5 (0.5 does not exceed 0.5).
        const BinaryMask mask = binarize_activations(a, 0.5);
        for (const auto l : mask.labels) REQUIRE(l == 0);
    }
}

TEST_CASE("binarize_activations uses a strict threshold") {
    ActivationMap a;
    a.side = 2;
    a.values = {0.9f, 0.2f, 0.5f, 0.51f};
    const BinaryMask mask = binarize_activations(a, 0.5);
    CHECK(mask.labels[0] == 1);
    CHECK(mask.labels[1] == 0);
    CHECK(mask.labels[2] == 0);  // equality is background
    CHECK(mask.labels[3] == 1);

    const BinaryMask all_fg = binarize_activations(a, 0.0);
    for (const auto l : all_fg.labels) CHECK(l == 1);  // sigmoid outputs are > 0
    const BinaryMask all_bg = binarize_activations(a, 1.0);
    for (const auto l : all_bg.labels) CHECK(l == 0);

    CHECK_THROWS(binarize_activations(a, -0.1));
    CHECK_THROWS(binarize_activations(a, 1.1));
}

TEST_CASE("forward_window rejects size mismatches") {
    const Model m = build_model(small_spec(Kind::cae), 2);
    CHECK_THROWS(forward_window(m, random_window(32, 1)));
}

TEST_CASE("binarize_document equals single-window inference on an exact fit") {
    const Model m = build_model(small_spec(Kind::rednet), 21);
    const GrayImage win = random_window(16, 13);
    const BinaryMask direct = binarize_activations(forward_window(m, win), 0.5);
    const BinaryMask doc = binarize_document(m, win, 0.5);
    CHECK(doc.labels == direct.labels);
}

TEST_CASE("binarize_document handles non-multiple sizes and stays deterministic across jobs") {
    const Model m = build_model(small_spec(Kind::rednet), 22);
    GrayImage img = random_window(16, 17);
    img = GrayImage(40, 24);
    std::mt19937 eng(23);
    for (auto& p : img.pixels) p = static_cast<float>(eng() % 256) / 255.0f;

    const BinaryMask serial = binarize_document(m, img, 0.5, 1);
    const BinaryMask parallel = binarize_document(m, img, 0.5, 4);
    CHECK(serial.width == 40);
    CHECK(serial.height == 24);
    CHECK(serial.labels == parallel.labels);
}

TEST_CASE("foreground shrinks as tau grows") {
    const Model m = build_model(small_spec(Kind::cae), 31);
    const GrayImage img = random_window(16, 19);
    const ActivationMap a = forward_window(m, img);
    const BinaryMask lo = binarize_activations(a, 0.3);
    const BinaryMask mid = binarize_activations(a, 0.5);
    const BinaryMask hi = binarize_activations(a, 0.7);
    for (size_t i = 0; i < lo.labels.size(); ++i) {
        if (hi.labels[i]) REQUIRE(mid.labels[i] == 1);
        if (mid.labels[i]) REQUIRE(lo.labels[i] == 1);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    for (const Kind kind : {Kind::cae, Kind::swwae, Kind::rednet}) {
        const Model m = build_model(small_spec(kind), 64);
        const std::vector<uint8_t> bytes = save_checkpoint(m);
        CHECK(bytes.size() == 13 + 4 * parameter_count(m.spec));

        const Model back = load_checkpoint(bytes);
        CHECK(back.spec.kind == m.spec.kind);
        CHECK(back.spec.window_side == m.spec.window_side);
        CHECK(back.snapshot_parameters() == m.snapshot_parameters());

        const GrayImage win = random_window(16, 99);
        CHECK(forward_window(m, win).values == forward_window(back, win).values);
    }
}

TEST_CASE("checkpoint loader rejects malformed blobs") {
    const Model m = build_model(small_spec(Kind::rednet), 8);
    std::vector<uint8_t> bytes = save_checkpoint(m);

    std::vector<uint8_t> bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS(load_checkpoint(bad_magic));

    std::vector<uint8_t> bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS(load_checkpoint(bad_version));

    std::vector<uint8_t> bad_kind = bytes;
    bad_kind[6] = 7;
    CHECK_THROWS(load_checkpoint(bad_kind));

    std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 5);
    CHECK_THROWS(load_checkpoint(truncated));

    std::vector<uint8_t> overlong = bytes;
    overlong.push_back(0);
    CHECK_THROWS(load_checkpoint(overlong));

    CHECK_THROWS(load_checkpoint(std::vector<uint8_t>{'S', 'A', 'E'}));
}

TEST_CASE("checkpoint files round trip through disk") {
    TempDir tmp("ckpt");
    const Model m = build_model(small_spec(Kind::swwae), 123);
    save_checkpoint_file(m, tmp.file("m.sae"));
    const Model back = load_checkpoint_file(tmp.file("m.sae"));
    CHECK(back.snapshot_parameters() == m.snapshot_parameters());
    CHECK_THROWS(load_checkpoint_file(tmp.file("missing.sae")));
}
