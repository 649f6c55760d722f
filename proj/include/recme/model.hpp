#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recme/layers.hpp"
#include "recme/tensor.hpp"

namespace recme {

// Architecture of the residual 1-D CNN:
//
//   input[L, 1] * input_scale -> 4 x residual block -> avgpool(3) -> flatten
//     -> dense(d0) -> relu -> dropout -> dense(d1) -> relu -> dense(classes) -> softmax
//
// Each residual block is conv3 -> relu -> conv3 on the main path plus a conv1
// shortcut, summed, then relu and maxpool(2).
struct ModelSpec {
    std::size_t input_len = 8000;
    std::vector<std::size_t> block_filters{16, 32, 64, 128};
    std::vector<std::size_t> dense_sizes{256, 128};
    double dropout_rate = 0.2;
    std::size_t num_classes = 2;
    // Raw FFT magnitudes grow with the transform length; 1/sqrt(16000) makes
    // the input the orthonormal-DFT magnitude of a one-second clip.
    double input_scale = 0.0079056941504209483;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Sequence lengths along the network for a given spec.
struct LayerShapes {
    std::vector<std::size_t> block_input_len;  // per block
    std::size_t block_output_len = 0;          // after the last maxpool
    std::size_t pooled_len = 0;                // after avgpool
    std::size_t flatten_width = 0;
};

void validate(const ModelSpec& spec);
LayerShapes layer_shapes(const ModelSpec& spec);

/// Copy of `defaults` with num_classes set, validated. Throws InvalidSpec.
ModelSpec build_model(std::size_t num_classes, const ModelSpec& defaults = {});

struct NamedTensor {
    std::string name;
    Tensor value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using ParamList = std::vector<NamedTensor>;

struct ResidualWeights {
    Tensor conv1_kernel, conv1_bias;        // [3, C_in, F], [F]
    Tensor conv2_kernel, conv2_bias;        // [3, F, F], [F]
    Tensor shortcut_kernel, shortcut_bias;  // [1, C_in, F], [F]
};

/// maxpool(relu(conv2(relu(conv1(x))) + shortcut(x))): [L, C_in] -> [L/2, F].
/// Throws ShapeMismatch.
Tensor residual_block(const Tensor& x, const ResidualWeights& w);

// Parameter names in manifest order, with their shapes.
std::vector<std::pair<std::string, std::vector<std::size_t>>> param_layout(const ModelSpec& spec);

/// He-uniform weights, zero biases. Deterministic in seed.
ParamList init_params(const ModelSpec& spec, std::uint64_t seed);

ParamList zeros_like(const ParamList& params);
std::size_t param_count(const ParamList& params);

struct ModelState {
    ModelSpec spec;
    ParamList params;
    std::vector<std::string> registry;  // class index -> speaker name

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
};

ModelState make_model(const ModelSpec& spec, std::vector<std::string> registry, std::uint64_t seed);
// Throws InvalidModel when parameters or registry disagree with the spec.
void check_model(const ModelState& state);

enum class Mode { Train, Infer };

struct BlockCache {
    Tensor input;   // block input [L, C_in]
    Tensor hidden;  // relu(conv1(input)) [L, F]
    Tensor sum;     // conv2(hidden) + shortcut(input), before relu [L, F]
};

struct ForwardCache {
    std::vector<std::vector<BlockCache>> blocks;  // [item][block]
    std::vector<std::size_t> pooled_input_shape;  // last block output [L, F]
    Tensor flat;       // [B, flatten_width]
    Tensor hidden1;    // relu(dense1) [B, d0]
    Tensor mask;       // dropout mask [B, d0]
    Tensor hidden2;    // relu(dense2) [B, d1]
};

struct ForwardResult {
    Tensor logits;  // [B, C]
    Tensor probs;   // [B, C]
    std::optional<ForwardCache> cache;
};

/// Runs the network on a batch shaped [B, input_len] or [B, input_len, 1].
/// A cache for backward is kept only in Train mode; rng drives dropout and
/// may be null in Infer mode.
ForwardResult forward(const ModelState& state, const Tensor& batch, Mode mode, nn::Rng* rng = nullptr);

/// Mean softmax cross-entropy over the batch.
double mean_loss(const ForwardResult& result, std::span<const std::size_t> labels);

/// Gradients of the mean batch loss with respect to every parameter, in the
/// same order and shapes as state.params. Throws MissingCache.
ParamList backward(const ModelState& state, const ForwardResult& result, std::span<const std::size_t> labels);

/// Stacks equal-length feature rows into a [B, len] batch tensor.
Tensor stack_rows(std::span<const std::vector<double>> rows);

}  // namespace recme
