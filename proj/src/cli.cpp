#include "binkit/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <tuple>

#include <CLI11.hpp>

#include "binkit/classical.hpp"
#include "binkit/evaluation.hpp"
#include "binkit/image.hpp"
#include "binkit/sae.hpp"
#include "binkit/training.hpp"

namespace binkit::cli {

namespace {

namespace fs = std::filesystem;

/// --seed wins; otherwise the BINKIT_SEED environment variable; otherwise 0.
uint64_t resolve_seed(const CLI::Option* opt, uint64_t value) {
    if (opt != nullptr && opt->count() > 0) return value;
    if (const char* env = std::getenv("BINKIT_SEED")) {
        char* end = nullptr;
        errno = 0;
        const unsigned long long parsed = std::strtoull(env, &end, 10);
        if (errno != 0 || end == env || *end != '\0')
            throw std::runtime_error("BINKIT_SEED: not a valid unsigned integer: " +
                                     std::string(env));
        return parsed;
    }
    return value;
}

struct BinarizeArgs {
    std::string input, output, method = "otsu", model_path;
    double tau = 0.5;
    int window = classical::kLocalWindowSide;
    double k = std::nan("");
    double R = classical::kSauvolaR;
    int jobs = 1;
    const CLI::Option* method_opt = nullptr;
    const CLI::Option* k_opt = nullptr;
};

int run_binarize(BinarizeArgs& a) {
    if (!a.model_path.empty() && a.method_opt->count() == 0) a.method = "sae";

    const GrayImage img = load_gray(a.input);
    BinaryMask mask;
    if (a.method == "sae") {
        if (a.model_path.empty())
            throw std::runtime_error("--method sae requires --model <checkpoint>");
        const sae::Model model = sae::load_checkpoint_file(a.model_path);
        mask = sae::binarize_document(model, img, a.tau, a.jobs);
    } else if (a.method == "otsu") {
        mask = classical::binarize_otsu(img);
    } else {
        const classical::LocalStats stats = classical::local_stats(img, a.window);
        classical::ThresholdMap tmap;
        if (a.method == "niblack")
            tmap = classical::threshold_niblack(stats,
                                                a.k_opt->count() ? a.k : classical::kNiblackK);
        else if (a.method == "sauvola")
            tmap = classical::threshold_sauvola(stats, a.k_opt->count() ? a.k : classical::kSauvolaK,
                                                a.R);
        else  // wolf; CLI11 already rejected anything else
            tmap = classical::threshold_wolf(stats, img,
                                             a.k_opt->count() ? a.k : classical::kWolfK);
        mask = classical::apply_threshold_map(img, tmap);
    }
    save_mask(mask, a.output);
    std::printf("wrote %s (%dx%d)\n", a.output.c_str(), mask.width, mask.height);
    return 0;
}

struct TopologyArgs {
    std::string topology = "rednet";
    int window = 256;
    int filters = 64;
    int kernel = 5;
    int depth = 0;  // 0 = derived from window
    std::string preset;
    const CLI::Option* topology_opt = nullptr;
    const CLI::Option* window_opt = nullptr;
    const CLI::Option* filters_opt = nullptr;
    const CLI::Option* kernel_opt = nullptr;
};

/// Registers --topology/--window/--filters/--kernel/--depth/--preset.
void add_topology_flags(CLI::App* cmd, TopologyArgs& t) {
    t.topology_opt = cmd->add_option("--topology", t.topology, "Network kind")
                         ->check(CLI::IsMember({"cae", "swwae", "rednet"}))
                         ->capture_default_str();
    t.window_opt = cmd->add_option("--window", t.window, "Window side in pixels")
                       ->capture_default_str();
    t.filters_opt = cmd->add_option("--filters", t.filters, "Filters per layer")
                        ->capture_default_str();
    t.kernel_opt = cmd->add_option("--kernel", t.kernel, "Kernel side")
                       ->check(CLI::IsMember({3, 5, 7}))
                       ->capture_default_str();
    cmd->add_option("--depth", t.depth, "Encoder layers (0 = derive from window)");
    cmd->add_option("--preset", t.preset, "small (64/16) or reference (256/64)")
        ->check(CLI::IsMember({"small", "reference"}));
}

sae::TopologySpec resolve_spec(const TopologyArgs& t) {
    TopologyArgs merged = t;
    if (!t.preset.empty()) {
        // Presets fill in whatever the user did not set explicitly.
        const int preset_window = t.preset == "small" ? 64 : 256;
        const int preset_filters = t.preset == "small" ? 16 : 64;
        if (t.topology_opt->count() == 0) merged.topology = "rednet";
        if (t.window_opt->count() == 0) merged.window = preset_window;
        if (t.filters_opt->count() == 0) merged.filters = preset_filters;
        if (t.kernel_opt->count() == 0) merged.kernel = 5;
    }
    sae::TopologySpec spec;
    spec.kind = sae::kind_from_name(merged.topology);
    spec.window_side = merged.window;
    spec.filters = merged.filters;
    spec.kernel_side = merged.kernel;
    spec.depth = merged.depth > 0 ? merged.depth : sae::default_depth(merged.window);
    spec.validate();
    return spec;
}

std::vector<double> parse_taus(const std::vector<double>& given) {
    return given.empty() ? eval::default_taus() : given;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Document image binarization toolkit"};
    app.require_subcommand(1);

    // ------------------------------------------------------------ binarize
    BinarizeArgs bin;
    auto* cmd_bin = app.add_subcommand("binarize", "Binarize one image");
    cmd_bin->add_option("input", bin.input, "Input image (PGM or PNG)")->required();
    cmd_bin->add_option("output", bin.output, "Output mask (PGM)")->required();
    bin.method_opt = cmd_bin->add_option("--method", bin.method, "Binarization method")
                         ->check(CLI::IsMember({"otsu", "niblack", "sauvola", "wolf", "sae"}))
                         ->capture_default_str();
    cmd_bin->add_option("--model", bin.model_path, "Checkpoint (implies --method sae)");
    cmd_bin->add_option("--tau", bin.tau, "Selection threshold")->capture_default_str();
    cmd_bin->add_option("--window", bin.window, "Local-stats window side")->capture_default_str();
    bin.k_opt = cmd_bin->add_option("--k", bin.k, "Method parameter k (default per method)");
    cmd_bin->add_option("--R", bin.R, "Sauvola dynamic range R")->capture_default_str();
    cmd_bin->add_option("--jobs", bin.jobs, "Parallel window workers")->capture_default_str();

    // --------------------------------------------------------------- synth
    struct {
        std::string out;
        uint64_t seed = 0;
        int train = 20, val = 4, test = 6, size = 512;
        double noise = 0.06;
        const CLI::Option* seed_opt = nullptr;
    } synth;
    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    cmd_synth->add_option("--out", synth.out, "Output directory")->required();
    synth.seed_opt = cmd_synth->add_option("--seed", synth.seed, "RNG seed");
    cmd_synth->add_option("--train", synth.train, "Training pages")->capture_default_str();
    cmd_synth->add_option("--val", synth.val, "Validation pages")->capture_default_str();
    cmd_synth->add_option("--test", synth.test, "Test pages")->capture_default_str();
    cmd_synth->add_option("--size", synth.size, "Page side in pixels")->capture_default_str();
    cmd_synth->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str();

    // --------------------------------------------------------------- train
    struct {
        std::string train_tsv, val_tsv, out;
        TopologyArgs topo;
        int epochs = 200, patience = 10, batch = 10, augment = 3;
        double lr = 1e-3;
        uint64_t seed = 0;
        bool quiet = false;
        const CLI::Option* seed_opt = nullptr;
    } tr;
    auto* cmd_train = app.add_subcommand("train", "Train a model");
    cmd_train->add_option("--train", tr.train_tsv, "Training manifest (TSV)")->required();
    cmd_train->add_option("--val", tr.val_tsv, "Validation manifest (default: 10% of train)");
    cmd_train->add_option("--out", tr.out, "Checkpoint output path")->required();
    add_topology_flags(cmd_train, tr.topo);
    cmd_train->add_option("--epochs", tr.epochs, "Epoch cap")->capture_default_str();
    cmd_train->add_option("--patience", tr.patience, "Early-stop patience")->capture_default_str();
    cmd_train->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str();
    cmd_train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
    cmd_train->add_option("--augment", tr.augment, "Synthetic pairs per patch")
        ->capture_default_str();
    tr.seed_opt = cmd_train->add_option("--seed", tr.seed, "RNG seed");
    cmd_train->add_flag("--quiet", tr.quiet, "Suppress per-epoch lines");

    // ---------------------------------------------------------------- eval
    struct {
        std::string model, test_tsv;
        double tau = 0.5;
        int jobs = 1;
    } ev;
    auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
    cmd_eval->add_option("--model", ev.model, "Checkpoint")->required();
    cmd_eval->add_option("--test", ev.test_tsv, "Test manifest")->required();
    cmd_eval->add_option("--tau", ev.tau, "Selection threshold")->capture_default_str();
    cmd_eval->add_option("--jobs", ev.jobs, "Parallel window workers")->capture_default_str();

    // --------------------------------------------------------------- sweep
    struct {
        std::string model, test_tsv, out;
        std::vector<double> taus;
        int jobs = 1;
    } sw;
    auto* cmd_sweep = app.add_subcommand("sweep", "F-m across thresholds");
    cmd_sweep->add_option("--model", sw.model, "Checkpoint")->required();
    cmd_sweep->add_option("--test", sw.test_tsv, "Test manifest")->required();
    cmd_sweep->add_option("--taus", sw.taus, "Thresholds (default 0.1..0.9)")->delimiter(',');
    cmd_sweep->add_option("--out", sw.out, "CSV output path");
    cmd_sweep->add_option("--jobs", sw.jobs, "Parallel window workers")->capture_default_str();

    // ------------------------------------------------------------- heatmap
    struct {
        std::string model, test_tsv, out;
        double tau = 0.5;
        int jobs = 1;
    } hm;
    auto* cmd_heat = app.add_subcommand("heatmap", "Window-position error heat maps");
    cmd_heat->add_option("--model", hm.model, "Checkpoint")->required();
    cmd_heat->add_option("--test", hm.test_tsv, "Test manifest")->required();
    cmd_heat->add_option("--tau", hm.tau, "Selection threshold")->capture_default_str();
    cmd_heat->add_option("--out", hm.out, "Output prefix (writes _fp/_fn/_gt.pgm and .csv)")
        ->required();
    cmd_heat->add_option("--jobs", hm.jobs, "Parallel window workers")->capture_default_str();

    // -------------------------------------------------------------- matrix
    struct {
        std::vector<std::string> models, tests;
        std::string out;
        double tau = 0.5;
        int jobs = 1;
    } mx;
    auto* cmd_matrix = app.add_subcommand("matrix", "Cross-domain train/test F-m matrix");
    cmd_matrix->add_option("--model", mx.models, "Checkpoints (one per training corpus)")
        ->required();
    cmd_matrix->add_option("--test", mx.tests, "Test manifests (one per corpus)")->required();
    cmd_matrix->add_option("--tau", mx.tau, "Selection threshold")->capture_default_str();
    cmd_matrix->add_option("--out", mx.out, "CSV output path");
    cmd_matrix->add_option("--jobs", mx.jobs, "Parallel window workers")->capture_default_str();

    // ---------------------------------------------------------- gridsearch
    struct {
        std::string train_tsv, val_tsv, topology = "rednet", out;
        std::vector<int> windows{64, 128, 256, 384};
        std::vector<int> filters{16, 32, 64, 128};
        std::vector<int> kernels{3, 5, 7};
        int epochs = 5, batch = 10, augment = 3;
        double tau = 0.5;
        uint64_t seed = 0;
        const CLI::Option* seed_opt = nullptr;
    } gs;
    auto* cmd_grid = app.add_subcommand("gridsearch", "Window/filter/kernel grid");
    cmd_grid->add_option("--train", gs.train_tsv, "Training manifest")->required();
    cmd_grid->add_option("--val", gs.val_tsv, "Validation manifest (default: 10% of train)");
    cmd_grid->add_option("--topology", gs.topology, "Network kind")
        ->check(CLI::IsMember({"cae", "swwae", "rednet"}))
        ->capture_default_str();
    cmd_grid->add_option("--windows", gs.windows, "Window sides")->delimiter(',');
    cmd_grid->add_option("--filters", gs.filters, "Filter counts")->delimiter(',');
    cmd_grid->add_option("--kernels", gs.kernels, "Kernel sides")->delimiter(',');
    cmd_grid->add_option("--epochs", gs.epochs, "Epoch cap per combination")
        ->capture_default_str();
    cmd_grid->add_option("--batch", gs.batch, "Mini-batch size")->capture_default_str();
    cmd_grid->add_option("--augment", gs.augment, "Synthetic pairs per patch")
        ->capture_default_str();
    cmd_grid->add_option("--tau", gs.tau, "Selection threshold")->capture_default_str();
    cmd_grid->add_option("--out", gs.out, "CSV output path");
    gs.seed_opt = cmd_grid->add_option("--seed", gs.seed, "RNG seed");

    // ----------------------------------------------------------------- run
    std::vector<const char*> argv;
    argv.push_back("binkit");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (cmd_bin->parsed()) return run_binarize(bin);

        if (cmd_synth->parsed()) {
            train::SynthParams params;
            params.page_width = params.page_height = synth.size;
            params.noise_sigma = synth.noise;
            const uint64_t seed = resolve_seed(synth.seed_opt, synth.seed);
            train::generate_synthetic_corpus(synth.out, seed, synth.train, synth.val, synth.test,
                                             params);
            std::printf("wrote corpus under %s (%d train / %d val / %d test pages, seed %llu)\n",
                        synth.out.c_str(), synth.train, synth.val, synth.test,
                        static_cast<unsigned long long>(seed));
            return 0;
        }

        if (cmd_train->parsed()) {
            const sae::TopologySpec spec = resolve_spec(tr.topo);
            const uint64_t seed = resolve_seed(tr.seed_opt, tr.seed);
            train::DatasetManifest train_split, val_split;
            if (tr.val_tsv.empty()) {
                const auto whole = train::load_manifest(tr.train_tsv, "train");
                std::tie(train_split, val_split) = train::split_validation(whole, 0.1, seed);
            } else {
                train_split = train::load_manifest(tr.train_tsv, "train");
                val_split = train::load_manifest(tr.val_tsv, "validation");
            }
            train::TrainConfig cfg;
            cfg.max_epochs = tr.epochs;
            // The library rejects patience > max_epochs; only the untouched
            // default bends when the user shrinks the epoch cap.
            if (cmd_train->count("--patience") == 0 && tr.patience > tr.epochs)
                tr.patience = tr.epochs;
            cfg.patience = tr.patience;
            cfg.batch_size = tr.batch;
            cfg.learning_rate = tr.lr;
            cfg.augment_factor = tr.augment;
            cfg.seed = seed;
            cfg.verbose = !tr.quiet;

            sae::Model model = sae::build_model(spec, seed);
            const train::TrainHistory hist = train::train(model, train_split, val_split, cfg);
            sae::save_checkpoint_file(model, tr.out);
            std::printf("wrote %s  best epoch %d  val-fm %.6f  (%s)\n", tr.out.c_str(),
                        hist.best_epoch + 1,
                        hist.epochs[static_cast<size_t>(hist.best_epoch)].val_fm,
                        hist.stop_reason == train::StopReason::early_stop ? "early stop"
                                                                          : "epoch cap");
            return 0;
        }

        if (cmd_eval->parsed()) {
            const sae::Model model = sae::load_checkpoint_file(ev.model);
            const auto manifest = train::load_manifest(ev.test_tsv, "test");
            const eval::EvalResult r = eval::evaluate(model, manifest, ev.tau, ev.jobs);
            std::printf("micro-fm %.6f  macro-fm %.6f  (tp %llu fp %llu fn %llu tn %llu)\n",
                        r.micro_fm, r.macro_fm, static_cast<unsigned long long>(r.micro.tp),
                        static_cast<unsigned long long>(r.micro.fp),
                        static_cast<unsigned long long>(r.micro.fn),
                        static_cast<unsigned long long>(r.micro.tn));
            return 0;
        }

        if (cmd_sweep->parsed()) {
            const sae::Model model = sae::load_checkpoint_file(sw.model);
            const auto manifest = train::load_manifest(sw.test_tsv, "test");
            const auto rows = eval::threshold_sweep(model, manifest, parse_taus(sw.taus), sw.jobs);
            for (const auto& r : rows) std::printf("tau %.3f  fm %.6f\n", r.tau, r.fm);
            std::printf("spread %.6f\n", eval::sweep_spread(rows));
            if (!sw.out.empty()) eval::write_sweep_csv(rows, sw.out);
            return 0;
        }

        if (cmd_heat->parsed()) {
            const sae::Model model = sae::load_checkpoint_file(hm.model);
            const auto manifest = train::load_manifest(hm.test_tsv, "test");
            const eval::ErrorHeatMap map = eval::error_heatmap(model, manifest, hm.tau, hm.jobs);
            eval::write_heatmap_pgm(map.fp, map.side, hm.out + "_fp.pgm");
            eval::write_heatmap_pgm(map.fn, map.side, hm.out + "_fn.pgm");
            eval::write_heatmap_pgm(map.gt_fg, map.side, hm.out + "_gt.pgm");
            eval::write_heatmap_csv(map, hm.out + ".csv");
            std::printf("wrote %s_{fp,fn,gt}.pgm and %s.csv  (fp %llu  fn %llu)\n", hm.out.c_str(),
                        hm.out.c_str(), static_cast<unsigned long long>(map.fp_total()),
                        static_cast<unsigned long long>(map.fn_total()));
            return 0;
        }

        if (cmd_matrix->parsed()) {
            std::vector<sae::Model> models;
            std::vector<std::string> train_names, test_names;
            std::vector<train::DatasetManifest> tests;
            for (const auto& path : mx.models) {
                models.push_back(sae::load_checkpoint_file(path));
                train_names.push_back(stem_of(path));
            }
            for (const auto& path : mx.tests) {
                tests.push_back(train::load_manifest(path, "test"));
                test_names.push_back(stem_of(path));
            }
            const eval::DomainMatrix matrix =
                eval::domain_matrix(models, train_names, tests, test_names, mx.tau, mx.jobs);
            for (size_t r = 0; r < matrix.fm.size(); ++r) {
                for (size_t c = 0; c < matrix.fm[r].size(); ++c)
                    std::printf("%s -> %s: fm %.6f\n", matrix.train_names[r].c_str(),
                                matrix.test_names[c].c_str(), matrix.fm[r][c]);
                std::printf("%s -> avg: fm %.6f\n", matrix.train_names[r].c_str(),
                            matrix.row_avg[r]);
            }
            if (!mx.out.empty()) eval::write_matrix_csv(matrix, mx.out);
            return 0;
        }

        if (cmd_grid->parsed()) {
            const uint64_t seed = resolve_seed(gs.seed_opt, gs.seed);
            train::DatasetManifest train_split, val_split;
            if (gs.val_tsv.empty()) {
                const auto whole = train::load_manifest(gs.train_tsv, "train");
                std::tie(train_split, val_split) = train::split_validation(whole, 0.1, seed);
            } else {
                train_split = train::load_manifest(gs.train_tsv, "train");
                val_split = train::load_manifest(gs.val_tsv, "validation");
            }
            std::ostringstream csv;
            csv << "window,filters,kernel,fm\n";
            double best_fm = -1.0;
            sae::TopologySpec best_spec;
            for (const int window : gs.windows)
                for (const int filters : gs.filters)
                    for (const int kernel : gs.kernels) {
                        sae::TopologySpec spec;
                        spec.kind = sae::kind_from_name(gs.topology);
                        spec.window_side = window;
                        spec.filters = filters;
                        spec.kernel_side = kernel;
                        spec.depth = sae::default_depth(window);
                        spec.validate();
                        train::TrainConfig cfg;
                        cfg.max_epochs = gs.epochs;
                        cfg.patience = gs.epochs;  // grid runs never stop early
                        cfg.batch_size = gs.batch;
                        cfg.augment_factor = gs.augment;
                        cfg.seed = seed;
                        sae::Model model = sae::build_model(spec, seed);
                        const auto hist = train::train(model, train_split, val_split, cfg);
                        const double fm = hist.epochs[static_cast<size_t>(hist.best_epoch)].val_fm;
                        std::printf("window %d  filters %d  kernel %d  fm %.6f\n", window, filters,
                                    kernel, fm);
                        csv << window << ',' << filters << ',' << kernel << ',' << fm << '\n';
                        if (fm > best_fm) {
                            best_fm = fm;
                            best_spec = spec;
                        }
                    }
            std::printf("best: window %d  filters %d  kernel %d  fm %.6f\n", best_spec.window_side,
                        best_spec.filters, best_spec.kernel_side, best_fm);
            if (!gs.out.empty()) {
                std::ofstream out(gs.out);
                if (!out) throw std::runtime_error("cannot open for writing: " + gs.out);
                out << csv.str();
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "binkit: " << e.what() << '\n';
        return 1;
    }
    std::cerr << "binkit: no subcommand executed\n";
    return 1;
}

}  // namespace binkit::cli
