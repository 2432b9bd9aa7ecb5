#include "binkit/sae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <thread>

#include "binkit/random.hpp"

namespace binkit::sae {

namespace {

using nn::Tape;
using nn::TensorPtr;

constexpr char kMagic[4] = {'S', 'A', 'E', 'B'};
constexpr uint16_t kVersion = 1;
constexpr size_t kHeaderBytes = 13;

/// Kernel/bias shapes for layer `i` in build order: encoder layers
/// [0, depth), decoder layers [depth, 2*depth), output layer 2*depth.
/// Encoder and output kernels are conv layout {out,in,k,k}; decoder
/// kernels are deconv layout {in,out,k,k} for SWWAE/REDNET and conv
/// layout for CAE (whose decoder upsamples instead of deconvolving).
struct LayerShape {
    std::vector<int> kernel;
    int bias = 0;
};

LayerShape layer_shape(const TopologySpec& spec, int i) {
    const int f = spec.filters, k = spec.kernel_side;
    if (i == 2 * spec.depth) return {{1, f, k, k}, 1};
    if (i == 0) return {{f, 1, k, k}, f};
    return {{f, f, k, k}, f};
}

int layer_count(const TopologySpec& spec) { return 2 * spec.depth + 1; }

void append_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::string kind_name(Kind kind) {
    switch (kind) {
        case Kind::cae: return "cae";
        case Kind::swwae: return "swwae";
        case Kind::rednet: return "rednet";
    }
    throw std::invalid_argument("unknown topology kind");
}

Kind kind_from_name(const std::string& name) {
    if (name == "cae") return Kind::cae;
    if (name == "swwae") return Kind::swwae;
    if (name == "rednet") return Kind::rednet;
    throw std::invalid_argument("unknown topology kind: " + name);
}

void TopologySpec::validate() const {
    if (kind != Kind::cae && kind != Kind::swwae && kind != Kind::rednet)
        throw std::invalid_argument("topology: unknown kind");
    if (depth < 1) throw std::invalid_argument("topology: depth must be >= 1");
    if (filters < 1) throw std::invalid_argument("topology: filters must be >= 1");
    if (kernel_side < 3 || kernel_side % 2 == 0)
        throw std::invalid_argument("topology: kernel side must be odd and >= 3");
    if (window_side < 2) throw std::invalid_argument("topology: window side must be >= 2");
    if (depth >= 31 || window_side % (1 << depth) != 0)
        throw std::invalid_argument("topology: window side must be divisible by 2^depth");
    if (window_side > 65535 || filters > 65535 || kernel_side > 255 || depth > 255)
        throw std::invalid_argument("topology: field exceeds checkpoint range");
}

int default_depth(int window_side) {
    if (window_side >= 128) return 5;
    if (window_side >= 64) return 3;
    int d = 0;
    while ((window_side >> (d + 1)) >= 8) ++d;
    return d > 0 ? d : 1;
}

size_t parameter_count(const TopologySpec& spec) {
    size_t total = 0;
    for (int i = 0; i < layer_count(spec); ++i) {
        const LayerShape ls = layer_shape(spec, i);
        total += nn::Tensor<float>::numel(ls.kernel) + static_cast<size_t>(ls.bias);
    }
    return total;
}

std::vector<float> Model::snapshot_parameters() const {
    std::vector<float> flat;
    flat.reserve(parameter_count(spec));
    for (const Param& p : params) flat.insert(flat.end(), p.tensor->v.begin(), p.tensor->v.end());
    return flat;
}

void Model::restore_parameters(const std::vector<float>& flat) {
    size_t pos = 0;
    for (Param& p : params) {
        if (pos + p.tensor->size() > flat.size())
            throw std::invalid_argument("parameter snapshot too short");
        std::copy(flat.begin() + static_cast<ptrdiff_t>(pos),
                  flat.begin() + static_cast<ptrdiff_t>(pos + p.tensor->size()),
                  p.tensor->v.begin());
        pos += p.tensor->size();
    }
    if (pos != flat.size()) throw std::invalid_argument("parameter snapshot too long");
}

Model build_model(const TopologySpec& spec, uint64_t seed) {
    spec.validate();
    Model m;
    m.spec = spec;
    rng::Engine eng(seed);
    for (int i = 0; i < layer_count(spec); ++i) {
        const LayerShape ls = layer_shape(spec, i);
        auto w = nn::make_tensor<float>(ls.kernel);
        // Fan-based uniform scaling: limit = sqrt(6 / (fan_in + fan_out)),
        // with fans counted over kernel area times channel counts.
        const double k2 = static_cast<double>(spec.kernel_side) * spec.kernel_side;
        const double fan_in = k2 * w->dim(1);
        const double fan_out = k2 * w->dim(0);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : w->v) v = static_cast<float>(rng::uniform(eng, -limit, limit));
        auto b = nn::make_tensor<float>({ls.bias});

        const std::string stem = i == 2 * spec.depth ? "out"
                                 : i < spec.depth    ? "enc" + std::to_string(i + 1)
                                                     : "dec" + std::to_string(i - spec.depth + 1);
        m.params.push_back({stem + ".w", w});
        m.params.push_back({stem + ".b", b});
    }
    return m;
}

namespace {

const TensorPtr<float>& kernel_of(const Model& m, int layer) {
    return m.params[static_cast<size_t>(2 * layer)].tensor;
}
const TensorPtr<float>& bias_of(const Model& m, int layer) {
    return m.params[static_cast<size_t>(2 * layer) + 1].tensor;
}

}  // namespace

nn::TensorPtr<float> forward(const Model& m, const nn::TensorPtr<float>& x, nn::Tape<float>* tape) {
    const TopologySpec& spec = m.spec;
    if (x->shape.size() != 4 || x->dim(1) != 1 || x->dim(2) != spec.window_side ||
        x->dim(3) != spec.window_side)
        throw std::invalid_argument("forward: input must be {N,1,window,window}");
    const int d = spec.depth;
    TensorPtr<float> h = x;

    switch (spec.kind) {
        case Kind::cae: {
            for (int i = 0; i < d; ++i) {
                h = nn::relu(tape, nn::conv2d(tape, h, kernel_of(m, i), bias_of(m, i), 1,
                                              nn::Padding::same));
                h = nn::maxpool2(tape, h).first;
            }
            for (int i = d; i < 2 * d; ++i) {
                h = nn::relu(tape, nn::conv2d(tape, h, kernel_of(m, i), bias_of(m, i), 1,
                                              nn::Padding::same));
                h = nn::upsample2(tape, h);
            }
            break;
        }
        case Kind::swwae: {
            std::vector<nn::Switches> switches;
            switches.reserve(static_cast<size_t>(d));
            for (int i = 0; i < d; ++i) {
                h = nn::relu(tape, nn::conv2d(tape, h, kernel_of(m, i), bias_of(m, i), 1,
                                              nn::Padding::same));
                auto pooled = nn::maxpool2(tape, h);
                h = pooled.first;
                switches.push_back(std::move(pooled.second));
            }
            for (int i = 0; i < d; ++i) {
                h = nn::relu(tape, nn::deconv2d(tape, h, kernel_of(m, d + i), bias_of(m, d + i), 1));
                h = nn::unpool2(tape, h, switches[static_cast<size_t>(d - 1 - i)]);
            }
            break;
        }
        case Kind::rednet: {
            std::vector<TensorPtr<float>> enc;
            enc.reserve(static_cast<size_t>(d));
            for (int i = 0; i < d; ++i) {
                h = nn::relu(tape, nn::conv2d(tape, h, kernel_of(m, i), bias_of(m, i), 2,
                                              nn::Padding::same));
                enc.push_back(h);
            }
            for (int i = 0; i < d; ++i) {
                // Decoder stage i consumes the encoder output at its own
                // resolution; stage 0 starts from the bottleneck itself, so
                // there is nothing distinct to add.
                TensorPtr<float> in = i == 0 ? h : nn::add(tape, h, enc[static_cast<size_t>(d - 1 - i)]);
                h = nn::relu(tape, nn::deconv2d(tape, in, kernel_of(m, d + i), bias_of(m, d + i), 2));
            }
            break;
        }
    }
    const int out_layer = 2 * d;
    return nn::sigmoid(tape, nn::conv2d(tape, h, kernel_of(m, out_layer), bias_of(m, out_layer), 1,
                                        nn::Padding::same));
}

ActivationMap forward_window(const Model& model, const GrayImage& window) {
    const int s = model.spec.window_side;
    if (window.width != s || window.height != s)
        throw std::invalid_argument("forward_window: window does not match model window side");
    auto x = nn::make_tensor<float>({1, 1, s, s});
    x->v.assign(window.pixels.begin(), window.pixels.end());
    auto y = forward(model, x, nullptr);
    ActivationMap a;
    a.side = s;
    a.values.assign(y->v.begin(), y->v.end());
    return a;
}

BinaryMask binarize_activations(const ActivationMap& a, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::invalid_argument("binarize_activations: tau must lie in [0,1]");
    BinaryMask mask(a.side, a.side);
    for (size_t i = 0; i < a.values.size(); ++i)
        mask.labels[i] = static_cast<double>(a.values[i]) > tau ? 1 : 0;
    return mask;
}

namespace {

/// Runs fn(i) for i in [0, n) across up to `jobs` threads; slot i always
/// receives the same work, so results are placement-deterministic.
void parallel_windows(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(jobs));
    for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += jobs) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

GrayImage activation_page(const Model& model, const GrayImage& img, int jobs) {
    const auto [grid, windows] = split_into_windows(img, model.spec.window_side);
    std::vector<GrayImage> acts(windows.size());
    parallel_windows(static_cast<int>(windows.size()), jobs, [&](int i) {
        const ActivationMap a = forward_window(model, windows[static_cast<size_t>(i)]);
        GrayImage g(a.side, a.side);
        g.pixels = a.values;
        acts[static_cast<size_t>(i)] = std::move(g);
    });
    return stitch_windows(grid, acts, img.width, img.height);
}

BinaryMask binarize_document(const Model& model, const GrayImage& img, double tau, int jobs) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::invalid_argument("binarize_document: tau must lie in [0,1]");
    const GrayImage page = activation_page(model, img, jobs);
    BinaryMask mask(page.width, page.height);
    for (size_t i = 0; i < page.pixels.size(); ++i)
        mask.labels[i] = static_cast<double>(page.pixels[i]) > tau ? 1 : 0;
    return mask;
}

std::vector<uint8_t> save_checkpoint(const Model& model) {
    model.spec.validate();
    std::vector<uint8_t> out;
    out.reserve(kHeaderBytes + 4 * parameter_count(model.spec));
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u16(out, kVersion);
    out.push_back(static_cast<uint8_t>(model.spec.kind));
    append_u16(out, static_cast<uint16_t>(model.spec.window_side));
    append_u16(out, static_cast<uint16_t>(model.spec.filters));
    out.push_back(static_cast<uint8_t>(model.spec.kernel_side));
    out.push_back(static_cast<uint8_t>(model.spec.depth));
    for (const Param& p : model.params)
        for (const float f : p.tensor->v) {
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            out.push_back(static_cast<uint8_t>(bits & 0xff));
            out.push_back(static_cast<uint8_t>((bits >> 8) & 0xff));
            out.push_back(static_cast<uint8_t>((bits >> 16) & 0xff));
            out.push_back(static_cast<uint8_t>((bits >> 24) & 0xff));
        }
    return out;
}

Model load_checkpoint(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < kHeaderBytes) throw std::invalid_argument("checkpoint: truncated header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::invalid_argument("checkpoint: bad magic");
    if (read_u16(bytes.data() + 4) != kVersion)
        throw std::invalid_argument("checkpoint: unsupported version");
    if (bytes[6] > 2) throw std::invalid_argument("checkpoint: unknown topology kind");

    TopologySpec spec;
    spec.kind = static_cast<Kind>(bytes[6]);
    spec.window_side = read_u16(bytes.data() + 7);
    spec.filters = read_u16(bytes.data() + 9);
    spec.kernel_side = bytes[11];
    spec.depth = bytes[12];
    spec.validate();

    const size_t expected = kHeaderBytes + 4 * parameter_count(spec);
    if (bytes.size() != expected)
        throw std::invalid_argument("checkpoint: payload size does not match spec");

    Model m = build_model(spec, 0);
    size_t pos = kHeaderBytes;
    for (Param& p : m.params)
        for (float& f : p.tensor->v) {
            const uint32_t bits = static_cast<uint32_t>(bytes[pos]) |
                                  (static_cast<uint32_t>(bytes[pos + 1]) << 8) |
                                  (static_cast<uint32_t>(bytes[pos + 2]) << 16) |
                                  (static_cast<uint32_t>(bytes[pos + 3]) << 24);
            std::memcpy(&f, &bits, 4);
            pos += 4;
        }
    return m;
}

void save_checkpoint_file(const Model& model, const std::string& path) {
    const std::vector<uint8_t> bytes = save_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Model load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_checkpoint(bytes);
}

}  // namespace binkit::sae
