#include "binkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binkit/evaluation.hpp"
#include "binkit/tensor.hpp"

namespace binkit::train {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- manifests

DatasetManifest load_manifest(const std::string& path, const std::string& split) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();

    DatasetManifest m;
    m.split = split;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
            throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                     ": expected image<TAB>gt");
        ManifestRecord rec;
        rec.image_path = line.substr(0, tab);
        rec.gt_path = line.substr(tab + 1);
        // Relative entries are resolved against the manifest's directory so
        // a corpus can be moved as a unit.
        if (fs::path(rec.image_path).is_relative()) rec.image_path = (base / rec.image_path).string();
        if (fs::path(rec.gt_path).is_relative()) rec.gt_path = (base / rec.gt_path).string();
        m.records.push_back(std::move(rec));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const ManifestRecord& rec : manifest.records)
        out << rec.image_path << '\t' << rec.gt_path << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

void TrainConfig::validate() const {
    if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
    if (patience > max_epochs)
        throw std::invalid_argument("train config: patience must not exceed max_epochs");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train config: betas must lie in [0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("train config: epsilon must be > 0");
    if (augment_factor < 0) throw std::invalid_argument("train config: augment_factor must be >= 0");
}

// ------------------------------------------------------------------ patches

std::vector<PatchPair> extract_patches(const DatasetManifest& manifest, int window_side) {
    std::vector<PatchPair> out;
    for (const ManifestRecord& rec : manifest.records) {
        const GrayImage img = load_gray(rec.image_path);
        const BinaryMask gt = load_mask(rec.gt_path);
        if (img.width != gt.width || img.height != gt.height)
            throw std::runtime_error("image/gt dimension mismatch: " + rec.image_path + " vs " +
                                     rec.gt_path);
        auto [grid, windows] = split_into_windows(img, window_side);
        auto [gt_grid, gt_windows] = split_mask_into_windows(gt, window_side);
        (void)gt_grid;
        for (size_t i = 0; i < windows.size(); ++i)
            out.push_back({std::move(windows[i]), std::move(gt_windows[i])});
    }
    return out;
}

// ------------------------------------------------------------- augmentation

AugmentTransform draw_transform(rng::Engine& eng) {
    AugmentTransform t;
    t.flip_h = rng::uniform01(eng) < 0.5;
    t.flip_v = rng::uniform01(eng) < 0.5;
    t.scale = rng::uniform(eng, 0.8, 1.25);
    return t;
}

namespace {

template <typename Get>
GrayImage flip_raster(int w, int h, bool flip_h, bool flip_v, Get get) {
    GrayImage out(w, h);
    for (int r = 0; r < h; ++r) {
        const int sr = flip_v ? h - 1 - r : r;
        for (int c = 0; c < w; ++c) {
            const int sc = flip_h ? w - 1 - c : c;
            out.at(r, c) = get(sr, sc);
        }
    }
    return out;
}

/// Center-anchored uniform rescale with bilinear interpolation and
/// reflection beyond the borders. scale == 1 is an exact identity.
GrayImage rescale_center(const GrayImage& src, double scale) {
    const int w = src.width, h = src.height;
    GrayImage out(w, h);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    for (int r = 0; r < h; ++r) {
        const double sy = (r - cy) / scale + cy;
        const int iy = static_cast<int>(std::floor(sy));
        const double fy = sy - iy;
        const int y0 = reflect_index(iy, h), y1 = reflect_index(iy + 1, h);
        for (int c = 0; c < w; ++c) {
            const double sx = (c - cx) / scale + cx;
            const int ix = static_cast<int>(std::floor(sx));
            const double fx = sx - ix;
            const int x0 = reflect_index(ix, w), x1 = reflect_index(ix + 1, w);
            const double top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
            const double bot = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
            out.at(r, c) = static_cast<float>(top * (1.0 - fy) + bot * fy);
        }
    }
    return out;
}

}  // namespace

PatchPair apply_transform(const PatchPair& pair, const AugmentTransform& t) {
    const int w = pair.image.width, h = pair.image.height;
    GrayImage img = flip_raster(w, h, t.flip_h, t.flip_v,
                                [&](int r, int c) { return pair.image.at(r, c); });
    GrayImage gtf = flip_raster(w, h, t.flip_h, t.flip_v,
                                [&](int r, int c) { return pair.gt.at(r, c) ? 1.0f : 0.0f; });
    if (t.scale != 1.0) {
        img = rescale_center(img, t.scale);
        gtf = rescale_center(gtf, t.scale);
    }
    PatchPair out;
    out.image = std::move(img);
    out.gt = BinaryMask(w, h);
    for (size_t i = 0; i < out.gt.labels.size(); ++i)
        out.gt.labels[i] = gtf.pixels[i] >= 0.5f ? 1 : 0;
    return out;
}

std::vector<PatchPair> augment(const PatchPair& pair, rng::Engine& eng, int factor) {
    std::vector<PatchPair> out;
    out.reserve(static_cast<size_t>(factor));
    for (int i = 0; i < factor; ++i) out.push_back(apply_transform(pair, draw_transform(eng)));
    return out;
}

// ----------------------------------------------------------------- training

namespace {

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long t = 0;
};

void adam_step(sae::Model& model, AdamState& state, const TrainConfig& cfg) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t p = 0; p < model.params.size(); ++p) {
        auto& tensor = *model.params[p].tensor;
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (size_t i = 0; i < tensor.size(); ++i) {
            const double g = static_cast<double>(tensor.g[i]);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double update = cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
            tensor.v[i] = static_cast<float>(static_cast<double>(tensor.v[i]) - update);
        }
    }
}

/// Copies pool samples `idx` into {B,1,s,s} input/target tensors.
void fill_batch(const std::vector<PatchPair>& pool, const std::vector<size_t>& order,
                size_t begin, size_t count, nn::Tensor<float>& x, nn::Tensor<float>& y) {
    const size_t plane = pool[order[begin]].image.pixel_count();
    for (size_t b = 0; b < count; ++b) {
        const PatchPair& s = pool[order[begin + b]];
        float* xp = x.v.data() + b * plane;
        float* yp = y.v.data() + b * plane;
        std::copy(s.image.pixels.begin(), s.image.pixels.end(), xp);
        for (size_t i = 0; i < plane; ++i) yp[i] = s.gt.labels[i] ? 1.0f : 0.0f;
    }
}

/// Micro-averaged F-m of the model over patch pairs at tau = 0.5.
double validation_fm(const sae::Model& model, const std::vector<PatchPair>& patches,
                     int batch_size) {
    const int s = model.spec.window_side;
    const size_t plane = static_cast<size_t>(s) * s;
    eval::Confusion total;
    for (size_t begin = 0; begin < patches.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), patches.size() - begin);
        auto x = nn::make_tensor<float>({static_cast<int>(count), 1, s, s});
        for (size_t b = 0; b < count; ++b)
            std::copy(patches[begin + b].image.pixels.begin(), patches[begin + b].image.pixels.end(),
                      x->v.data() + b * plane);
        const auto pred = sae::forward(model, x, nullptr);
        for (size_t b = 0; b < count; ++b) {
            const float* pp = pred->v.data() + b * plane;
            const uint8_t* gp = patches[begin + b].gt.labels.data();
            for (size_t i = 0; i < plane; ++i) {
                const bool fg = pp[i] > 0.5f;
                if (fg && gp[i]) ++total.tp;
                else if (fg) ++total.fp;
                else if (gp[i]) ++total.fn;
                else ++total.tn;
            }
        }
    }
    return eval::f_measure(total);
}

}  // namespace

TrainHistory train(sae::Model& model, const DatasetManifest& train_split,
                   const DatasetManifest& val_split, const TrainConfig& config) {
    config.validate();
    if (train_split.empty()) throw std::invalid_argument("train: training split is empty");
    if (val_split.empty()) throw std::invalid_argument("train: validation split is empty");

    const int side = model.spec.window_side;
    rng::Engine eng(config.seed);

    std::vector<PatchPair> pool = extract_patches(train_split, side);
    if (pool.empty()) throw std::invalid_argument("train: no patches in training split");
    {
        const size_t originals = pool.size();
        pool.reserve(originals * static_cast<size_t>(1 + config.augment_factor));
        for (size_t i = 0; i < originals; ++i) {
            auto extra = augment(pool[i], eng, config.augment_factor);
            for (auto& p : extra) pool.push_back(std::move(p));
        }
    }
    const std::vector<PatchPair> val_patches = extract_patches(val_split, side);
    if (val_patches.empty()) throw std::invalid_argument("train: no patches in validation split");

    AdamState adam;
    for (const auto& p : model.params) {
        adam.m.emplace_back(p.tensor->size(), 0.0);
        adam.v.emplace_back(p.tensor->size(), 0.0);
        p.tensor->ensure_grad();
    }

    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), size_t{0});

    TrainHistory history;
    std::vector<float> best_params = model.snapshot_parameters();
    double best_fm = -1.0;
    int since_best = 0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng::shuffle(eng, order);
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t begin = 0; begin < pool.size(); begin += static_cast<size_t>(config.batch_size)) {
            const size_t count = std::min(static_cast<size_t>(config.batch_size), pool.size() - begin);
            auto x = nn::make_tensor<float>({static_cast<int>(count), 1, side, side});
            auto y = nn::make_tensor<float>({static_cast<int>(count), 1, side, side});
            fill_batch(pool, order, begin, count, *x, *y);

            for (const auto& p : model.params) p.tensor->zero_grad();
            nn::Tape<float> tape;
            const auto pred = sae::forward(model, x, &tape);
            const auto loss = nn::soft_fmeasure_loss(&tape, pred, y);
            if (!std::isfinite(loss->v[0]))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch + 1) + ", batch " +
                                         std::to_string(batches + 1));
            tape.backward(*loss);
            adam_step(model, adam, config);
            loss_sum += static_cast<double>(loss->v[0]);
            ++batches;
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        stats.val_fm = validation_fm(model, val_patches, config.batch_size);
        history.epochs.push_back(stats);
        if (config.verbose)
            std::printf("epoch %d/%d  loss %.6f  val-fm %.6f\n", epoch + 1, config.max_epochs,
                        stats.train_loss, stats.val_fm);

        if (stats.val_fm > best_fm) {
            best_fm = stats.val_fm;
            history.best_epoch = epoch;
            best_params = model.snapshot_parameters();
            since_best = 0;
        } else if (++since_best >= config.patience) {
            history.stop_reason = StopReason::early_stop;
            break;
        }
    }
    if (history.epochs.size() == static_cast<size_t>(config.max_epochs))
        history.stop_reason = StopReason::max_epochs;

    model.restore_parameters(best_params);
    return history;
}

std::pair<DatasetManifest, DatasetManifest> split_validation(const DatasetManifest& manifest,
                                                             double fraction, uint64_t seed) {
    const size_t n = manifest.records.size();
    if (n < 2)
        throw std::invalid_argument("split_validation: need at least 2 records to split");
    size_t n_val = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
    n_val = std::clamp<size_t>(n_val, 1, n - 1);

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    rng::Engine eng(seed);
    rng::shuffle(eng, idx);
    std::vector<bool> is_val(n, false);
    for (size_t i = 0; i < n_val; ++i) is_val[idx[i]] = true;

    DatasetManifest tr, va;
    tr.split = "train";
    va.split = "validation";
    for (size_t i = 0; i < n; ++i)
        (is_val[i] ? va : tr).records.push_back(manifest.records[i]);
    return {std::move(tr), std::move(va)};
}

// --------------------------------------------------------- synthetic corpus

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void stamp_disc(GrayImage& img, BinaryMask& gt, double cx, double cy, double radius, float ink) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r2) {
                img.at(y, x) = ink;
                gt.set(y, x, true);
            }
        }
}

/// Composes one page; acceptance (foreground band) is checked by the caller.
void draw_page(rng::Engine& eng, const SynthParams& p, GrayImage& img, BinaryMask& gt) {
    const int W = p.page_width, H = p.page_height;
    img = GrayImage(W, H);
    gt = BinaryMask(W, H);

    // Background: linear gradient plus a few low-frequency cosine clouds.
    const double base = rng::uniform(eng, 0.78, 0.90);
    const double gx = rng::uniform(eng, -0.08, 0.08);
    const double gy = rng::uniform(eng, -0.08, 0.08);
    struct Cloud {
        double amp, fx, fy, phase;
    };
    Cloud clouds[3];
    for (Cloud& c : clouds)
        c = {rng::uniform(eng, 0.01, 0.04), rng::uniform(eng, 0.5, 2.5),
             rng::uniform(eng, 0.5, 2.5), rng::uniform(eng, 0.0, 6.283185307179586)};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double u = static_cast<double>(x) / W, v = static_cast<double>(y) / H;
            double val = base + gx * (2.0 * u - 1.0) + gy * (2.0 * v - 1.0);
            for (const Cloud& c : clouds)
                val += c.amp * std::cos(6.283185307179586 * (c.fx * u + c.fy * v) + c.phase);
            img.at(y, x) = static_cast<float>(std::clamp(val, 0.55, 0.98));
        }

    // Bleed-through blots: soft low-contrast darkening, never below 0.42 so
    // a noise-free page keeps a clean intensity gap above the ink range.
    const double area_scale = static_cast<double>(W) * H / (512.0 * 512.0);
    const int blots = std::clamp(static_cast<int>(std::lround(4.0 * area_scale)), 1, 12);
    for (int i = 0; i < blots; ++i) {
        const double cx = rng::uniform(eng, 0.0, W), cy = rng::uniform(eng, 0.0, H);
        const double radius = rng::uniform(eng, 20.0, 70.0);
        const double depth = rng::uniform(eng, 0.10, 0.30);
        const int x0 = std::max(0, static_cast<int>(cx - radius));
        const int x1 = std::min(W - 1, static_cast<int>(cx + radius));
        const int y0 = std::max(0, static_cast<int>(cy - radius));
        const int y1 = std::min(H - 1, static_cast<int>(cy + radius));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
                if (d2 < 1.0)
                    img.at(y, x) = static_cast<float>(
                        std::max(0.42, img.at(y, x) - depth * (1.0 - d2)));
            }
    }

    // Foreground strokes: random polylines stamped as overlapping discs.
    const int strokes = std::clamp(static_cast<int>(std::lround(10.0 * area_scale)), 2, 40);
    for (int i = 0; i < strokes; ++i) {
        const float ink = static_cast<float>(rng::uniform(eng, 0.05, 0.38));
        double x = rng::uniform(eng, 0.0, W), y = rng::uniform(eng, 0.0, H);
        double theta = rng::uniform(eng, 0.0, 6.283185307179586);
        const double thickness = rng::uniform(eng, 1.2, 3.5);
        const int segments = 3 + static_cast<int>(rng::below(eng, 6));
        for (int s = 0; s < segments; ++s) {
            const double len = rng::uniform(eng, 15.0, 50.0);
            const double step = std::max(0.5, thickness * 0.4);
            const int steps = std::max(1, static_cast<int>(len / step));
            for (int t = 0; t <= steps; ++t) {
                stamp_disc(img, gt, x, y, thickness, ink);
                x += step * std::cos(theta);
                y += step * std::sin(theta);
            }
            theta += rng::uniform(eng, -0.7, 0.7);
        }
    }

    // Disc glyphs.
    const int glyphs = std::clamp(static_cast<int>(std::lround(23.0 * area_scale)), 2, 80);
    for (int i = 0; i < glyphs; ++i) {
        const float ink = static_cast<float>(rng::uniform(eng, 0.05, 0.38));
        stamp_disc(img, gt, rng::uniform(eng, 0.0, W), rng::uniform(eng, 0.0, H),
                   rng::uniform(eng, 2.0, 6.0), ink);
    }

    // Pixel noise, after composition; the ground truth is unaffected.
    if (p.noise_sigma > 0.0)
        for (auto& v : img.pixels)
            v = static_cast<float>(clamp01(v + p.noise_sigma * rng::normal(eng)));
}

}  // namespace

PatchPair generate_synthetic_page(rng::Engine& eng, const SynthParams& params) {
    if (params.page_width < 32 || params.page_height < 32)
        throw std::invalid_argument("synthetic page size must be at least 32x32");
    PatchPair page;
    for (int attempt = 0; attempt < 64; ++attempt) {
        draw_page(eng, params, page.image, page.gt);
        const double fg =
            static_cast<double>(std::count(page.gt.labels.begin(), page.gt.labels.end(), uint8_t{1})) /
            static_cast<double>(page.gt.pixel_count());
        if (fg >= params.min_foreground && fg <= params.max_foreground) return page;
    }
    throw std::runtime_error("synthetic page rejected 64 times; foreground band unreachable");
}

CorpusManifests generate_synthetic_corpus(const std::string& out_dir, uint64_t seed,
                                          int train_pages, int val_pages, int test_pages,
                                          const SynthParams& params) {
    if (train_pages < 0 || val_pages < 0 || test_pages < 0 ||
        train_pages + val_pages + test_pages < 1)
        throw std::invalid_argument("synthetic corpus needs at least one page");

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "gt");

    rng::Engine eng(seed);
    CorpusManifests result;
    result.train.split = "train";
    result.validation.split = "validation";
    result.test.split = "test";

    const struct {
        const char* stem;
        int count;
        DatasetManifest* manifest;
        const char* tsv;
    } groups[] = {
        {"train", train_pages, &result.train, "train.tsv"},
        {"val", val_pages, &result.validation, "val.tsv"},
        {"test", test_pages, &result.test, "test.tsv"},
    };

    for (const auto& group : groups) {
        DatasetManifest relative;
        for (int i = 0; i < group.count; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%03d.pgm", group.stem, i);
            const PatchPair page = generate_synthetic_page(eng, params);
            const std::string img_rel = std::string("images/") + name;
            const std::string gt_rel = std::string("gt/") + name;
            save_gray(page.image, (fs::path(out_dir) / img_rel).string());
            save_mask(page.gt, (fs::path(out_dir) / gt_rel).string());
            relative.records.push_back({img_rel, gt_rel});
            group.manifest->records.push_back({(fs::path(out_dir) / img_rel).string(),
                                               (fs::path(out_dir) / gt_rel).string()});
        }
        save_manifest(relative, (fs::path(out_dir) / group.tsv).string());
    }
    return result;
}

}  // namespace binkit::train
