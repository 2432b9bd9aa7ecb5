#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "binkit/classical.hpp"
#include "binkit/cli.hpp"
#include "binkit/sae.hpp"
#include "binkit/training.hpp"
#include "support/tmpdir.hpp"

using namespace binkit;

namespace {

/// Runs dispatch while capturing stderr; returns {exit code, stderr text}.
std::pair<int, std::string> run(const std::vector<std::string>& args) {
    std::stringstream captured;
    std::streambuf* old = std::cerr.rdbuf(captured.rdbuf());
    const int rc = cli::dispatch(args);
    std::cerr.rdbuf(old);
    return {rc, captured.str()};
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
}

GrayImage bimodal_page(int w, int h) {
    GrayImage img(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) img.at(r, c) = c < w / 2 ? 0.1f : 0.9f;
    return img;
}

sae::TopologySpec tiny_spec() {
    sae::TopologySpec spec;
    spec.kind = sae::Kind::rednet;
    spec.window_side = 16;
    spec.filters = 3;
    spec.kernel_side = 3;
    spec.depth = 2;
    return spec;
}

}  // namespace

TEST_CASE("no subcommand is an error") {
    const auto [rc, err] = run({});
    CHECK(rc != 0);
}

TEST_CASE("binarize with otsu matches the library call") {
    TempDir tmp("cli_otsu");
    save_gray(bimodal_page(40, 30), tmp.file("in.pgm"));

    const auto [rc, err] = run({"binarize", tmp.file("in.pgm"), tmp.file("out.pgm")});
    CHECK(rc == 0);
    CHECK(err.empty());

    const BinaryMask got = load_mask(tmp.file("out.pgm"));
    const BinaryMask want = classical::binarize_otsu(load_gray(tmp.file("in.pgm")));
    REQUIRE(got.width == 40);
    REQUIRE(got.height == 30);
    CHECK(got.labels == want.labels);
}

TEST_CASE("binarize accepts each classical method with its default k") {
    TempDir tmp("cli_classical");
    const std::string in = tmp.file("in.pgm");
    save_gray(bimodal_page(48, 32), in);
    const GrayImage img = load_gray(in);
    const classical::LocalStats stats = classical::local_stats(img, 15);

    const struct {
        const char* name;
        classical::ThresholdMap tmap;
    } cases[] = {
        {"niblack", classical::threshold_niblack(stats, classical::kNiblackK)},
        {"sauvola", classical::threshold_sauvola(stats, classical::kSauvolaK, classical::kSauvolaR)},
        {"wolf", classical::threshold_wolf(stats, img, classical::kWolfK)},
    };
    for (const auto& c : cases) {
        INFO(c.name);
        const std::string out = tmp.file(std::string(c.name) + ".pgm");
        const auto [rc, err] = run({"binarize", in, out, "--method", c.name, "--window", "15"});
        REQUIRE(rc == 0);
        const BinaryMask got = load_mask(out);
        const BinaryMask want = classical::apply_threshold_map(img, c.tmap);
        CHECK(got.labels == want.labels);
    }

    // An explicit --k overrides the per-method default.
    const auto [rc, err] =
        run({"binarize", in, tmp.file("k.pgm"), "--method", "niblack", "--window", "15", "--k", "0.8"});
    REQUIRE(rc == 0);
    const BinaryMask with_k = load_mask(tmp.file("k.pgm"));
    const BinaryMask custom =
        classical::apply_threshold_map(img, classical::threshold_niblack(stats, 0.8));
    CHECK(with_k.labels == custom.labels);
}

TEST_CASE("binarize rejects unknown methods with a diagnostic naming the flag") {
    TempDir tmp("cli_badmethod");
    save_gray(bimodal_page(16, 16), tmp.file("in.pgm"));
    const auto [rc, err] =
        run({"binarize", tmp.file("in.pgm"), tmp.file("out.pgm"), "--method", "foo"});
    CHECK(rc != 0);
    CHECK(err.find("--method") != std::string::npos);
}

TEST_CASE("binarize reports missing input files") {
    TempDir tmp("cli_missing");
    const auto [rc, err] = run({"binarize", tmp.file("nope.pgm"), tmp.file("out.pgm")});
    CHECK(rc == 1);
    CHECK(err.find("binkit:") != std::string::npos);
}

TEST_CASE("--model implies the sae method and matches the library call") {
    TempDir tmp("cli_sae");
    const sae::Model model = sae::build_model(tiny_spec(), 77);
    sae::save_checkpoint_file(model, tmp.file("m.sae"));
    save_gray(bimodal_page(40, 24), tmp.file("in.pgm"));

    const auto [rc, err] = run({"binarize", tmp.file("in.pgm"), tmp.file("out.pgm"), "--model",
                                tmp.file("m.sae"), "--tau", "0.5"});
    REQUIRE(rc == 0);
    const BinaryMask got = load_mask(tmp.file("out.pgm"));
    const BinaryMask want = sae::binarize_document(model, load_gray(tmp.file("in.pgm")), 0.5);
    CHECK(got.labels == want.labels);

    // --method sae without --model is an error.
    const auto [rc2, err2] =
        run({"binarize", tmp.file("in.pgm"), tmp.file("x.pgm"), "--method", "sae"});
    CHECK(rc2 == 1);
    CHECK(err2.find("--model") != std::string::npos);
}

TEST_CASE("synth is deterministic and honors BINKIT_SEED as a fallback") {
    TempDir a("cli_synth_a"), b("cli_synth_b"), c("cli_synth_c"), d("cli_synth_d");
    const std::vector<std::string> common = {"--train", "1", "--val", "1",
                                             "--test", "1", "--size", "96"};

    auto args_for = [&](TempDir& dir, std::initializer_list<std::string> extra) {
        std::vector<std::string> args = {"synth", "--out", dir.path()};
        args.insert(args.end(), common.begin(), common.end());
        args.insert(args.end(), extra.begin(), extra.end());
        return args;
    };

    REQUIRE(run(args_for(a, {"--seed", "5"})).first == 0);
    REQUIRE(run(args_for(b, {"--seed", "5"})).first == 0);
    CHECK(slurp(a.file("images/train_000.pgm")) == slurp(b.file("images/train_000.pgm")));
    CHECK(slurp(a.file("gt/test_000.pgm")) == slurp(b.file("gt/test_000.pgm")));
    CHECK(slurp(a.file("train.tsv")) == slurp(b.file("train.tsv")));

    // Environment fallback reproduces the explicit flag...
    REQUIRE(setenv("BINKIT_SEED", "5", 1) == 0);
    REQUIRE(run(args_for(c, {})).first == 0);
    CHECK(slurp(a.file("images/train_000.pgm")) == slurp(c.file("images/train_000.pgm")));

    // ...but an explicit --seed wins over the environment.
    REQUIRE(run(args_for(d, {"--seed", "6"})).first == 0);
    CHECK(slurp(a.file("images/train_000.pgm")) != slurp(d.file("images/train_000.pgm")));

    REQUIRE(setenv("BINKIT_SEED", "not-a-number", 1) == 0);
    TempDir e("cli_synth_e");
    const auto [rc, err] = run(args_for(e, {}));
    CHECK(rc == 1);
    CHECK(err.find("BINKIT_SEED") != std::string::npos);
    unsetenv("BINKIT_SEED");
}

TEST_CASE("train validates the topology before touching any files") {
    const auto [rc, err] = run({"train", "--train", "/nonexistent.tsv", "--out", "/tmp/x.sae",
                                "--window", "30", "--depth", "2"});
    CHECK(rc == 1);
    CHECK(err.find("binkit:") != std::string::npos);
    CHECK(err.find("nonexistent") == std::string::npos);  // failed before file access
}

TEST_CASE("eval, sweep, heatmap, and matrix run end to end on a tiny corpus") {
    TempDir tmp("cli_eval");
    const sae::Model model = sae::build_model(tiny_spec(), 3);
    sae::save_checkpoint_file(model, tmp.file("m.sae"));

    GrayImage page = bimodal_page(32, 32);
    BinaryMask gt(32, 32);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 16; ++c) gt.set(r, c, true);
    save_gray(page, tmp.file("p.pgm"));
    save_mask(gt, tmp.file("p_gt.pgm"));
    train::DatasetManifest manifest;
    manifest.records.push_back({tmp.file("p.pgm"), tmp.file("p_gt.pgm")});
    train::save_manifest(manifest, tmp.file("test.tsv"));

    CHECK(run({"eval", "--model", tmp.file("m.sae"), "--test", tmp.file("test.tsv")}).first == 0);

    CHECK(run({"sweep", "--model", tmp.file("m.sae"), "--test", tmp.file("test.tsv"), "--out",
               tmp.file("sweep.csv")})
              .first == 0);
    std::ifstream sweep_csv(tmp.file("sweep.csv"));
    std::string header;
    std::getline(sweep_csv, header);
    CHECK(header == "tau,fm,tp,fp,fn");

    CHECK(run({"heatmap", "--model", tmp.file("m.sae"), "--test", tmp.file("test.tsv"), "--out",
               tmp.file("heat")})
              .first == 0);
    CHECK(load_gray(tmp.file("heat_fp.pgm")).width == 16);
    CHECK(load_gray(tmp.file("heat_fn.pgm")).height == 16);
    CHECK(load_gray(tmp.file("heat_gt.pgm")).width == 16);
    std::ifstream heat_csv(tmp.file("heat.csv"));
    std::getline(heat_csv, header);
    CHECK(header == "row,col,fp,fn,gt_fg");

    CHECK(run({"matrix", "--model", tmp.file("m.sae"), "--test", tmp.file("test.tsv"), "--out",
               tmp.file("matrix.csv")})
              .first == 0);
    std::ifstream matrix_csv(tmp.file("matrix.csv"));
    std::getline(matrix_csv, header);
    CHECK(header == "train_corpus,test_corpus,fm");
    std::string row;
    std::getline(matrix_csv, row);
    CHECK(row.find("m,test,") == 0);  // names derive from file stems

    // Missing checkpoint path surfaces as a clean error.
    const auto [rc, err] = run({"eval", "--model", tmp.file("ghost.sae"), "--test",
                                tmp.file("test.tsv")});
    CHECK(rc == 1);
    CHECK(err.find("binkit:") != std::string::npos);
}

TEST_CASE("train and gridsearch produce checkpoints and CSV on a small corpus") {
    TempDir tmp("cli_train");
    REQUIRE(run({"synth", "--out", tmp.path(), "--seed", "9", "--train", "2", "--val", "1",
                 "--test", "1", "--size", "96"})
                .first == 0);

    // no explicit --patience: the default (10) must bend to the 1-epoch cap
    const auto [rc, err] = run({"train", "--train", tmp.file("train.tsv"), "--val",
                                tmp.file("val.tsv"), "--out", tmp.file("m.sae"), "--window", "16",
                                "--filters", "2", "--kernel", "3", "--depth", "1", "--epochs", "1",
                                "--augment", "0", "--seed", "4", "--quiet"});
    REQUIRE(rc == 0);
    const sae::Model m = sae::load_checkpoint_file(tmp.file("m.sae"));
    CHECK(m.spec.window_side == 16);
    CHECK(m.spec.filters == 2);
    CHECK(m.spec.depth == 1);

    REQUIRE(run({"gridsearch", "--train", tmp.file("train.tsv"), "--val", tmp.file("val.tsv"),
                 "--windows", "16", "--filters", "2", "--kernels", "3", "--epochs", "1", "--augment",
                 "0", "--seed", "4", "--out", tmp.file("grid.csv")})
                .first == 0);
    std::ifstream grid_csv(tmp.file("grid.csv"));
    std::string header, row;
    std::getline(grid_csv, header);
    CHECK(header == "window,filters,kernel,fm");
    std::getline(grid_csv, row);
    CHECK(row.find("16,2,3,") == 0);
}

TEST_CASE("train preset keeps explicitly set flags") {
    // Preset resolution happens before any file I/O; the explicit window
    // wins over the preset's and fails validation (50 is not divisible by
    // 2^2, the derived depth), so the bogus manifest is never opened.
    const auto [rc, err] = run({"train", "--train", "/nonexistent.tsv", "--out", "/tmp/x.sae",
                                "--preset", "small", "--window", "50"});
    CHECK(rc == 1);
    CHECK(err.find("nonexistent") == std::string::npos);
}
