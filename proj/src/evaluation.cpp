#include "binkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace binkit::eval {

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("confusion: mask dimensions differ");
    Confusion c;
    for (size_t i = 0; i < pred.labels.size(); ++i) {
        const bool p = pred.labels[i] != 0, g = gt.labels[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f_measure(const Confusion& c) {
    const uint64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;  // nothing to find and nothing found
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

namespace {

/// Loads a record's page and gt, checking dimensions.
std::pair<GrayImage, BinaryMask> load_record(const train::ManifestRecord& rec) {
    GrayImage img = load_gray(rec.image_path);
    BinaryMask gt = load_mask(rec.gt_path);
    if (img.width != gt.width || img.height != gt.height)
        throw std::runtime_error("image/gt dimension mismatch: " + rec.image_path + " vs " +
                                 rec.gt_path);
    return {std::move(img), std::move(gt)};
}

Confusion page_confusion(const GrayImage& activations, const BinaryMask& gt, double tau) {
    Confusion c;
    for (size_t i = 0; i < activations.pixels.size(); ++i) {
        const bool p = static_cast<double>(activations.pixels[i]) > tau;
        const bool g = gt.labels[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

}  // namespace

EvalResult evaluate(const sae::Model& model, const train::DatasetManifest& manifest, double tau,
                    int jobs) {
    if (manifest.empty()) throw std::invalid_argument("evaluate: manifest is empty");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("evaluate: tau must lie in [0,1]");
    EvalResult result;
    for (const auto& rec : manifest.records) {
        const auto [img, gt] = load_record(rec);
        const GrayImage acts = sae::activation_page(model, img, jobs);
        const Confusion c = page_confusion(acts, gt, tau);
        result.micro += c;
        result.per_image.push_back(f_measure(c));
    }
    result.micro_fm = f_measure(result.micro);
    double sum = 0.0;
    for (const double fm : result.per_image) sum += fm;
    result.macro_fm = sum / static_cast<double>(result.per_image.size());
    return result;
}

std::vector<double> default_taus() {
    std::vector<double> taus;
    for (int i = 1; i <= 9; ++i) taus.push_back(i / 10.0);
    return taus;
}

std::vector<SweepRow> threshold_sweep(const sae::Model& model,
                                      const train::DatasetManifest& manifest,
                                      const std::vector<double>& taus, int jobs) {
    if (manifest.empty()) throw std::invalid_argument("threshold_sweep: test split is empty");
    if (taus.empty()) throw std::invalid_argument("threshold_sweep: tau list is empty");
    for (const double tau : taus)
        if (!(tau >= 0.0 && tau <= 1.0))
            throw std::invalid_argument("threshold_sweep: taus must lie in [0,1]");

    std::vector<SweepRow> rows(taus.size());
    for (size_t i = 0; i < taus.size(); ++i) rows[i].tau = taus[i];

    // Activations are computed once per page and re-thresholded per tau.
    for (const auto& rec : manifest.records) {
        const auto [img, gt] = load_record(rec);
        const GrayImage acts = sae::activation_page(model, img, jobs);
        for (SweepRow& row : rows) {
            const Confusion c = page_confusion(acts, gt, row.tau);
            row.tp += c.tp;
            row.fp += c.fp;
            row.fn += c.fn;
        }
    }
    for (SweepRow& row : rows) {
        Confusion c;
        c.tp = row.tp;
        c.fp = row.fp;
        c.fn = row.fn;
        row.fm = f_measure(c);
    }
    return rows;
}

double sweep_spread(const std::vector<SweepRow>& rows) {
    if (rows.empty()) return 0.0;
    double lo = rows[0].fm, hi = rows[0].fm;
    for (const SweepRow& r : rows) {
        lo = std::min(lo, r.fm);
        hi = std::max(hi, r.fm);
    }
    return hi - lo;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "tau,fm,tp,fp,fn\n";
    for (const SweepRow& r : rows)
        out << r.tau << ',' << r.fm << ',' << r.tp << ',' << r.fp << ',' << r.fn << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

uint64_t ErrorHeatMap::fp_total() const {
    uint64_t s = 0;
    for (const uint64_t v : fp) s += v;
    return s;
}

uint64_t ErrorHeatMap::fn_total() const {
    uint64_t s = 0;
    for (const uint64_t v : fn) s += v;
    return s;
}

std::vector<double> ErrorHeatMap::normalized(const std::vector<uint64_t>& cells) {
    uint64_t total = 0;
    for (const uint64_t v : cells) total += v;
    std::vector<double> out(cells.size(), 0.0);
    if (total == 0) return out;
    for (size_t i = 0; i < cells.size(); ++i)
        out[i] = 100.0 * static_cast<double>(cells[i]) / static_cast<double>(total);
    return out;
}

ErrorHeatMap error_heatmap(const sae::Model& model, const train::DatasetManifest& manifest,
                           double tau, int jobs) {
    if (manifest.empty()) throw std::invalid_argument("error_heatmap: manifest is empty");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("error_heatmap: tau must lie in [0,1]");

    const int side = model.spec.window_side;
    ErrorHeatMap map;
    map.side = side;
    map.fp.assign(static_cast<size_t>(side) * side, 0);
    map.fn.assign(static_cast<size_t>(side) * side, 0);
    map.gt_fg.assign(static_cast<size_t>(side) * side, 0);

    for (const auto& rec : manifest.records) {
        const auto [img, gt] = load_record(rec);
        const auto [grid, windows] = split_into_windows(img, side);
        std::vector<sae::ActivationMap> acts(windows.size());
        // Window inference is parallel-safe; accumulation below is serial.
        const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(windows.size())));
        if (workers == 1) {
            for (size_t i = 0; i < windows.size(); ++i)
                acts[i] = sae::forward_window(model, windows[i]);
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < workers; ++t)
                pool.emplace_back([&, t] {
                    for (size_t i = static_cast<size_t>(t); i < windows.size();
                         i += static_cast<size_t>(workers))
                        acts[i] = sae::forward_window(model, windows[i]);
                });
            for (auto& th : pool) th.join();
        }
        for (size_t wi = 0; wi < windows.size(); ++wi) {
            const auto [orow, ocol] = grid.origins[wi];
            for (int r = 0; r < side; ++r) {
                if (orow + r >= img.height) break;  // reflected padding is not scored
                for (int c = 0; c < side; ++c) {
                    if (ocol + c >= img.width) break;
                    const bool p = static_cast<double>(acts[wi].values[static_cast<size_t>(r) * side + c]) > tau;
                    const bool g = gt.at(orow + r, ocol + c);
                    const size_t cell = static_cast<size_t>(r) * side + c;
                    if (g) ++map.gt_fg[cell];
                    if (p && !g) ++map.fp[cell];
                    else if (!p && g) ++map.fn[cell];
                }
            }
        }
    }
    return map;
}

void write_heatmap_pgm(const std::vector<uint64_t>& cells, int side, const std::string& path) {
    const uint64_t peak = cells.empty() ? 0 : *std::max_element(cells.begin(), cells.end());
    GrayImage img(side, side);
    for (size_t i = 0; i < cells.size(); ++i)
        img.pixels[i] = peak == 0 ? 0.0f
                                  : static_cast<float>(static_cast<double>(cells[i]) /
                                                       static_cast<double>(peak));
    save_gray(img, path);
}

void write_heatmap_csv(const ErrorHeatMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "row,col,fp,fn,gt_fg\n";
    for (int r = 0; r < map.side; ++r)
        for (int c = 0; c < map.side; ++c) {
            const size_t i = static_cast<size_t>(r) * map.side + c;
            out << r << ',' << c << ',' << map.fp[i] << ',' << map.fn[i] << ',' << map.gt_fg[i]
                << '\n';
        }
    if (!out) throw std::runtime_error("write failed: " + path);
}

DomainMatrix domain_matrix(const std::vector<sae::Model>& models,
                           const std::vector<std::string>& train_names,
                           const std::vector<train::DatasetManifest>& test_manifests,
                           const std::vector<std::string>& test_names, double tau, int jobs) {
    if (models.empty() || test_manifests.empty())
        throw std::invalid_argument("domain_matrix: need at least one model and one test split");
    if (models.size() != train_names.size() || test_manifests.size() != test_names.size())
        throw std::invalid_argument("domain_matrix: name lists must match model/manifest lists");

    DomainMatrix matrix;
    matrix.train_names = train_names;
    matrix.test_names = test_names;
    for (size_t r = 0; r < models.size(); ++r) {
        std::vector<double> row;
        double sum = 0.0;
        for (size_t c = 0; c < test_manifests.size(); ++c) {
            const double fm = evaluate(models[r], test_manifests[c], tau, jobs).micro_fm;
            row.push_back(fm);
            sum += fm;
        }
        matrix.row_avg.push_back(sum / static_cast<double>(row.size()));
        matrix.fm.push_back(std::move(row));
    }
    return matrix;
}

void write_matrix_csv(const DomainMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "train_corpus,test_corpus,fm\n";
    for (size_t r = 0; r < matrix.fm.size(); ++r) {
        for (size_t c = 0; c < matrix.fm[r].size(); ++c)
            out << matrix.train_names[r] << ',' << matrix.test_names[c] << ',' << matrix.fm[r][c]
                << '\n';
        out << matrix.train_names[r] << ",avg," << matrix.row_avg[r] << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace binkit::eval
