#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "binkit/image.hpp"
#include "binkit/random.hpp"
#include "binkit/sae.hpp"

// Dataset manifests, grid patch extraction, flip/scale augmentation, Adam
// training with early stopping, and the deterministic synthetic corpus
// generator used for desk-scale experiments.

namespace binkit::train {

struct ManifestRecord {
    std::string image_path;
    std::string gt_path;
};

/// One split of a corpus: tab-separated `image<TAB>gt` lines on disk.
struct DatasetManifest {
    std::string split;  // "train", "validation", or "test"
    std::vector<ManifestRecord> records;

    bool empty() const { return records.empty(); }
};

DatasetManifest load_manifest(const std::string& path, const std::string& split = "");
void save_manifest(const DatasetManifest& manifest, const std::string& path);

struct TrainConfig {
    int max_epochs = 200;
    int patience = 10;
    int batch_size = 10;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int augment_factor = 3;
    uint64_t seed = 0;
    bool verbose = false;

    /// Throws when any count is non-positive or patience > max_epochs.
    void validate() const;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_fm = 0.0;
};

enum class StopReason { max_epochs, early_stop };

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;  // 0-based index into `epochs`
    StopReason stop_reason = StopReason::max_epochs;
};

/// A window paired pixel-for-pixel with its ground truth.
struct PatchPair {
    GrayImage image;
    BinaryMask gt;
};

/// Disjoint reflect-padded grid patches from every page of a manifest.
std::vector<PatchPair> extract_patches(const DatasetManifest& manifest, int window_side);

struct AugmentTransform {
    bool flip_h = false;
    bool flip_v = false;
    double scale = 1.0;
};

AugmentTransform draw_transform(rng::Engine& eng);

/// Applies the same flips + center-anchored uniform scale (bilinear,
/// reflect at borders) to image and gt; gt is re-binarized at 1/2 after
/// interpolation. Identity transform reproduces the pair exactly.
PatchPair apply_transform(const PatchPair& pair, const AugmentTransform& t);

/// `factor` independently drawn synthetic pairs from one input pair.
std::vector<PatchPair> augment(const PatchPair& pair, rng::Engine& eng, int factor = 3);

/// Adam on the soft F-measure loss over shuffled mini-batches; after each
/// epoch, validation F-m at tau = 0.5 decides early stopping. The model is
/// left holding the parameters of the best validation epoch.
TrainHistory train(sae::Model& model, const DatasetManifest& train_split,
                   const DatasetManifest& val_split, const TrainConfig& config);

/// Deterministically moves ~`fraction` of the records (at least one when
/// possible) into a validation manifest; used when no explicit split exists.
std::pair<DatasetManifest, DatasetManifest> split_validation(const DatasetManifest& manifest,
                                                             double fraction, uint64_t seed);

struct SynthParams {
    int page_width = 512;
    int page_height = 512;
    double noise_sigma = 0.06;
    double min_foreground = 0.02;  // accepted pages by rejection sampling
    double max_foreground = 0.30;
};

/// One synthetic page: smooth gradient + cloud background, low-contrast
/// bleed-through blots, dark polyline strokes and disc glyphs (the exact
/// stroke raster is the ground truth), then Gaussian pixel noise.
PatchPair generate_synthetic_page(rng::Engine& eng, const SynthParams& params);

struct CorpusManifests {
    DatasetManifest train;
    DatasetManifest validation;
    DatasetManifest test;
};

/// Writes images/gt PGMs plus train.tsv / val.tsv / test.tsv under
/// `out_dir`. Byte-identical output for identical seed and parameters.
CorpusManifests generate_synthetic_corpus(const std::string& out_dir, uint64_t seed,
                                          int train_pages, int val_pages, int test_pages,
                                          const SynthParams& params = {});

}  // namespace binkit::train
