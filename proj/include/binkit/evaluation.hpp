#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "binkit/image.hpp"
#include "binkit/sae.hpp"
#include "binkit/training.hpp"

// Measurement apparatus: pixel confusion counts, F-measure, threshold
// sweeps, per-window error heat maps, and the cross-domain matrix.

namespace binkit::eval {

struct Confusion {
    uint64_t tp = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;
    uint64_t tn = 0;

    Confusion& operator+=(const Confusion& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        tn += other.tn;
        return *this;
    }
    uint64_t total() const { return tp + fp + fn + tn; }
};

/// Exact pixel counts; foreground is the positive class.
Confusion confusion(const BinaryMask& pred, const BinaryMask& gt);

/// 2TP / (2TP + FP + FN); the degenerate all-true-negative case is 1.0.
double f_measure(const Confusion& c);

struct EvalResult {
    Confusion micro;
    double micro_fm = 0.0;          // from summed confusion counts
    double macro_fm = 0.0;          // mean of per-image F-m
    std::vector<double> per_image;  // F-m per manifest record
};

/// Binarizes every page of the manifest at tau and scores it against gt.
EvalResult evaluate(const sae::Model& model, const train::DatasetManifest& manifest,
                    double tau, int jobs = 1);

struct SweepRow {
    double tau = 0.0;
    double fm = 0.0;
    uint64_t tp = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;
};

/// Computes activations once per page and re-thresholds them at each tau.
/// Rows come back in the given tau order.
std::vector<SweepRow> threshold_sweep(const sae::Model& model,
                                      const train::DatasetManifest& manifest,
                                      const std::vector<double>& taus, int jobs = 1);

/// max - min of the F-m column.
double sweep_spread(const std::vector<SweepRow>& rows);

/// Default sweep grid {0.1, 0.2, ..., 0.9}.
std::vector<double> default_taus();

/// CSV with header `tau,fm,tp,fp,fn`.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

/// Counts of misclassified pixels by window-relative position, FP and FN
/// separately, plus the ground-truth foreground histogram. Only pixels that
/// fall inside the original page extent are counted (reflected padding is
/// synthetic and scored nowhere else either).
struct ErrorHeatMap {
    int side = 0;
    std::vector<uint64_t> fp;
    std::vector<uint64_t> fn;
    std::vector<uint64_t> gt_fg;

    uint64_t fp_total() const;
    uint64_t fn_total() const;

    /// Cells as percentages of the channel total (all in [0,100]; an empty
    /// channel normalizes to all zeros).
    static std::vector<double> normalized(const std::vector<uint64_t>& cells);
};

ErrorHeatMap error_heatmap(const sae::Model& model, const train::DatasetManifest& manifest,
                           double tau, int jobs = 1);

/// PGM rendering, linearly scaled so the largest cell maps to 255.
void write_heatmap_pgm(const std::vector<uint64_t>& cells, int side, const std::string& path);

/// CSV with header `row,col,fp,fn,gt_fg`, one line per window cell.
void write_heatmap_csv(const ErrorHeatMap& map, const std::string& path);

struct DomainMatrix {
    std::vector<std::string> train_names;
    std::vector<std::string> test_names;
    std::vector<std::vector<double>> fm;  // fm[row][col] = train row, test col
    std::vector<double> row_avg;
};

/// Micro F-m of every model on every test split, plus per-row averages.
DomainMatrix domain_matrix(const std::vector<sae::Model>& models,
                           const std::vector<std::string>& train_names,
                           const std::vector<train::DatasetManifest>& test_manifests,
                           const std::vector<std::string>& test_names, double tau, int jobs = 1);

/// CSV with header `train_corpus,test_corpus,fm`; row averages appear as
/// extra records with test_corpus = "avg".
void write_matrix_csv(const DomainMatrix& matrix, const std::string& path);

}  // namespace binkit::eval
