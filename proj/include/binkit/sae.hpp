#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "binkit/image.hpp"
#include "binkit/tensor.hpp"

// The selectional auto-encoder: three encoder-decoder topologies that map a
// square grayscale window to a same-shape map of per-pixel foreground
// confidences, plus thresholding, whole-document inference, and a bit-exact
// checkpoint format.

namespace binkit::sae {

enum class Kind : uint8_t { cae = 0, swwae = 1, rednet = 2 };

std::string kind_name(Kind kind);
Kind kind_from_name(const std::string& name);

struct TopologySpec {
    Kind kind = Kind::rednet;
    int window_side = 64;
    int filters = 16;
    int kernel_side = 5;
    int depth = 3;

    /// Throws std::invalid_argument when the window is not divisible by
    /// 2^depth or any field is out of its domain.
    void validate() const;
};

/// Depth used when none is requested: 3 at window 64, 5 at windows >= 128,
/// and log2(side/8) below 64 so the bottleneck never shrinks past 8 pixels.
int default_depth(int window_side);

struct Param {
    std::string name;
    nn::TensorPtr<float> tensor;
};

struct Model {
    TopologySpec spec;
    std::vector<Param> params;  // build order: encoder, decoder, output; w then b

    std::vector<float> snapshot_parameters() const;
    void restore_parameters(const std::vector<float>& flat);
};

/// Per-pixel foreground confidences for one window, in the open (0,1).
struct ActivationMap {
    int side = 0;
    std::vector<float> values;
};

/// Closed-form number of scalar parameters implied by a spec.
size_t parameter_count(const TopologySpec& spec);

/// Builds a model with fan-scaled uniform weights drawn from `seed` and
/// zero biases. Same spec and seed always produce identical parameters.
Model build_model(const TopologySpec& spec, uint64_t seed);

/// Runs a batch {N,1,side,side} through the network; output has the same
/// shape with values in (0,1). Pass a tape to record gradients.
nn::TensorPtr<float> forward(const Model& model, const nn::TensorPtr<float>& x,
                             nn::Tape<float>* tape);

ActivationMap forward_window(const Model& model, const GrayImage& window);

/// Foreground wherever the activation strictly exceeds tau.
BinaryMask binarize_activations(const ActivationMap& a, double tau);

/// split -> forward each window (up to `jobs` at once) -> threshold ->
/// stitch back to the original extent.
BinaryMask binarize_document(const Model& model, const GrayImage& img, double tau,
                             int jobs = 1);

/// Per-window activations for a whole page, stitched to page extent.
/// Shared by binarize_document and the evaluation sweeps, which re-threshold
/// the same activations at many taus.
GrayImage activation_page(const Model& model, const GrayImage& img, int jobs = 1);

// Checkpoint format: magic "SAEB", version u16 = 1, kind u8, window_side
// u16, filters u16, kernel u8, depth u8 (all little-endian), followed by
// every parameter tensor as little-endian 32-bit floats in build order.
std::vector<uint8_t> save_checkpoint(const Model& model);
Model load_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint_file(const Model& model, const std::string& path);
Model load_checkpoint_file(const std::string& path);

}  // namespace binkit::sae
