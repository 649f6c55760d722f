#include "recme/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "recme/error.hpp"

namespace recme {
namespace {

constexpr std::size_t kBlocks = 4;
constexpr std::size_t kParamsPerBlock = 6;

// Indices into the parameter list (see param_layout).
enum BlockParam : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kShortW, kShortB };
constexpr std::size_t kDense1W = kBlocks * kParamsPerBlock;
constexpr std::size_t kDense1B = kDense1W + 1;
constexpr std::size_t kDense2W = kDense1W + 2;
constexpr std::size_t kDense2B = kDense1W + 3;
constexpr std::size_t kOutW = kDense1W + 4;
constexpr std::size_t kOutB = kDense1W + 5;
constexpr std::size_t kParamTotal = kDense1W + 6;

std::size_t block_param(std::size_t block, BlockParam which) { return block * kParamsPerBlock + which; }

void fail_spec(const std::string& msg) { throw Error(ErrorKind::InvalidSpec, msg); }

// [B, len] view of the batch regardless of a trailing singleton channel axis.
std::size_t batch_items(const Tensor& batch, std::size_t input_len) {
    const bool rank2 = batch.rank() == 2 && batch.dim(1) == input_len;
    const bool rank3 = batch.rank() == 3 && batch.dim(1) == input_len && batch.dim(2) == 1;
    if (!rank2 && !rank3) {
        throw Error(ErrorKind::ShapeMismatch,
                    "batch " + shape_string(batch.shape()) + " does not match input_len " + std::to_string(input_len));
    }
    return batch.dim(0);
}

struct BlockOutput {
    BlockCache cache;
    Tensor pooled;
};

BlockOutput block_forward(const ParamList& p, std::size_t block, Tensor input) {
    const auto& k1 = p[block_param(block, kConv1W)].value;
    const auto& b1 = p[block_param(block, kConv1B)].value;
    const auto& k2 = p[block_param(block, kConv2W)].value;
    const auto& b2 = p[block_param(block, kConv2B)].value;
    const auto& ks = p[block_param(block, kShortW)].value;
    const auto& bs = p[block_param(block, kShortB)].value;

    Tensor hidden = nn::conv1d(input, k1, b1);
    nn::relu_inplace(hidden);
    Tensor sum = nn::conv1d(hidden, k2, b2);
    sum += nn::conv1d(input, ks, bs);
    Tensor pooled = nn::maxpool1d(nn::relu(sum));
    return {BlockCache{std::move(input), std::move(hidden), std::move(sum)}, std::move(pooled)};
}

// Returns the gradient w.r.t. the block input (empty when want_input is false).
Tensor block_backward(const ParamList& p, ParamList& g, std::size_t block, const BlockCache& c,
                      const Tensor& grad_pooled, bool want_input) {
    const auto& k1 = p[block_param(block, kConv1W)].value;
    const auto& k2 = p[block_param(block, kConv2W)].value;
    const auto& ks = p[block_param(block, kShortW)].value;

    const Tensor grad_act = nn::maxpool1d_backward(nn::relu(c.sum), grad_pooled);
    // The residual add hands the same gradient to both branches.
    const Tensor grad_sum = nn::relu_backward(c.sum, grad_act);

    Tensor grad_hidden;
    nn::conv1d_backward_accumulate(c.hidden, k2, grad_sum, g[block_param(block, kConv2W)].value,
                                   g[block_param(block, kConv2B)].value, &grad_hidden);
    Tensor grad_in_short;
    nn::conv1d_backward_accumulate(c.input, ks, grad_sum, g[block_param(block, kShortW)].value,
                                   g[block_param(block, kShortB)].value, want_input ? &grad_in_short : nullptr);
    const Tensor grad_pre = nn::relu_backward(c.hidden, grad_hidden);
    Tensor grad_in_main;
    nn::conv1d_backward_accumulate(c.input, k1, grad_pre, g[block_param(block, kConv1W)].value,
                                   g[block_param(block, kConv1B)].value, want_input ? &grad_in_main : nullptr);
    if (!want_input) return {};
    grad_in_main += grad_in_short;
    return grad_in_main;
}

}  // namespace

Tensor residual_block(const Tensor& x, const ResidualWeights& w) {
    Tensor hidden = nn::conv1d(x, w.conv1_kernel, w.conv1_bias);
    nn::relu_inplace(hidden);
    Tensor sum = nn::conv1d(hidden, w.conv2_kernel, w.conv2_bias);
    const Tensor shortcut = nn::conv1d(x, w.shortcut_kernel, w.shortcut_bias);
    if (!sum.same_shape(shortcut)) throw Error(ErrorKind::ShapeMismatch, "main and shortcut branches disagree");
    sum += shortcut;
    return nn::maxpool1d(nn::relu(sum));
}

void validate(const ModelSpec& spec) {
    if (spec.block_filters.size() != kBlocks) fail_spec("block_filters must list exactly 4 channel counts");
    if (spec.dense_sizes.size() != 2) fail_spec("dense_sizes must list exactly 2 hidden widths");
    if (spec.num_classes < 2) fail_spec("num_classes must be >= 2");
    if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) fail_spec("dropout_rate must be in [0, 1)");
    if (!(std::isfinite(spec.input_scale) && spec.input_scale > 0.0)) fail_spec("input_scale must be positive");
    for (std::size_t f : spec.block_filters) {
        if (f == 0) fail_spec("block filter counts must be positive");
    }
    for (std::size_t d : spec.dense_sizes) {
        if (d == 0) fail_spec("dense sizes must be positive");
    }
    // Four halvings must leave at least one avgpool window.
    if (spec.input_len / 16 < 3) fail_spec("input_len too short for four pooling stages");
}

LayerShapes layer_shapes(const ModelSpec& spec) {
    LayerShapes s;
    std::size_t len = spec.input_len;
    for (std::size_t b = 0; b < kBlocks; ++b) {
        s.block_input_len.push_back(len);
        len /= 2;
    }
    s.block_output_len = len;
    s.pooled_len = (len - 3) / 3 + 1;
    s.flatten_width = s.pooled_len * spec.block_filters.back();
    return s;
}

ModelSpec build_model(std::size_t num_classes, const ModelSpec& defaults) {
    ModelSpec spec = defaults;
    spec.num_classes = num_classes;
    validate(spec);
    return spec;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> param_layout(const ModelSpec& spec) {
    validate(spec);
    const LayerShapes shapes = layer_shapes(spec);
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
    std::size_t cin = 1;
    for (std::size_t b = 0; b < kBlocks; ++b) {
        const std::size_t f = spec.block_filters[b];
        const std::string prefix = "block" + std::to_string(b + 1) + ".";
        out.push_back({prefix + "conv1.kernel", {3, cin, f}});
        out.push_back({prefix + "conv1.bias", {f}});
        out.push_back({prefix + "conv2.kernel", {3, f, f}});
        out.push_back({prefix + "conv2.bias", {f}});
        out.push_back({prefix + "shortcut.kernel", {1, cin, f}});
        out.push_back({prefix + "shortcut.bias", {f}});
        cin = f;
    }
    out.push_back({"dense1.weight", {shapes.flatten_width, spec.dense_sizes[0]}});
    out.push_back({"dense1.bias", {spec.dense_sizes[0]}});
    out.push_back({"dense2.weight", {spec.dense_sizes[0], spec.dense_sizes[1]}});
    out.push_back({"dense2.bias", {spec.dense_sizes[1]}});
    out.push_back({"output.weight", {spec.dense_sizes[1], spec.num_classes}});
    out.push_back({"output.bias", {spec.num_classes}});
    return out;
}

ParamList init_params(const ModelSpec& spec, std::uint64_t seed) {
    nn::Rng rng(seed);
    ParamList params;
    for (auto& [name, shape] : param_layout(spec)) {
        Tensor t(shape);
        if (shape.size() > 1) {
            // Kernels are [K, C_in, C_out], dense weights [N_in, N_out]: fan-in is all but the last axis.
            const std::size_t fan_in = t.size() / shape.back();
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (double& v : t.values()) v = dist(rng);
        }
        params.push_back({name, std::move(t)});
    }
    return params;
}

ParamList zeros_like(const ParamList& params) {
    ParamList out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back({p.name, Tensor(p.value.shape())});
    return out;
}

std::size_t param_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

const Tensor& ModelState::param(const std::string& name) const {
    for (const auto& p : params) {
        if (p.name == name) return p.value;
    }
    throw Error(ErrorKind::InvalidModel, "no parameter named " + name);
}

Tensor& ModelState::param(const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).param(name));
}

ModelState make_model(const ModelSpec& spec, std::vector<std::string> registry, std::uint64_t seed) {
    ModelState state{spec, init_params(spec, seed), std::move(registry)};
    check_model(state);
    return state;
}

void check_model(const ModelState& state) {
    try {
        validate(state.spec);
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidModel, e.what());
    }
    const auto layout = param_layout(state.spec);
    if (state.params.size() != layout.size()) throw Error(ErrorKind::InvalidModel, "parameter count mismatch");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (state.params[i].name != layout[i].first || state.params[i].value.shape() != layout[i].second) {
            throw Error(ErrorKind::InvalidModel, "parameter " + layout[i].first + " has wrong name or shape");
        }
    }
    if (state.registry.size() != state.spec.num_classes) {
        throw Error(ErrorKind::InvalidModel, "registry size does not match num_classes");
    }
}

ForwardResult forward(const ModelState& state, const Tensor& batch, Mode mode, nn::Rng* rng) {
    const ModelSpec& spec = state.spec;
    const ParamList& p = state.params;
    if (p.size() != kParamTotal) throw Error(ErrorKind::InvalidModel, "parameter list is incomplete");
    const std::size_t items = batch_items(batch, spec.input_len);
    const LayerShapes shapes = layer_shapes(spec);
    const bool training = mode == Mode::Train;
    if (training && spec.dropout_rate > 0.0 && rng == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "training-mode forward needs an rng for dropout");
    }

    ForwardCache cache;
    if (training) cache.blocks.resize(items);
    Tensor flat({items, shapes.flatten_width});
    for (std::size_t i = 0; i < items; ++i) {
        const auto first = batch.storage().begin() + static_cast<std::ptrdiff_t>(i * spec.input_len);
        Tensor x({spec.input_len, 1}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(spec.input_len)));
        x *= spec.input_scale;
        for (std::size_t b = 0; b < kBlocks; ++b) {
            BlockOutput out = block_forward(p, b, std::move(x));
            x = std::move(out.pooled);
            if (training) cache.blocks[i].push_back(std::move(out.cache));
        }
        cache.pooled_input_shape = x.shape();
        const Tensor pooled = nn::avgpool1d(x);
        std::copy(pooled.storage().begin(), pooled.storage().end(),
                  flat.storage().begin() + static_cast<std::ptrdiff_t>(i * shapes.flatten_width));
    }

    Tensor h1 = nn::dense(flat, p[kDense1W].value, p[kDense1B].value);
    nn::relu_inplace(h1);
    Tensor mask;
    Tensor dropped;
    if (training) {
        auto d = nn::dropout(h1, spec.dropout_rate, *rng, true);
        dropped = std::move(d.output);
        mask = std::move(d.mask);
    } else {
        dropped = h1;
    }
    Tensor h2 = nn::dense(dropped, p[kDense2W].value, p[kDense2B].value);
    nn::relu_inplace(h2);
    Tensor logits = nn::dense(h2, p[kOutW].value, p[kOutB].value);

    const std::size_t classes = spec.num_classes;
    Tensor probs({items, classes});
    for (std::size_t i = 0; i < items; ++i) {
        const auto first = logits.storage().begin() + static_cast<std::ptrdiff_t>(i * classes);
        const Tensor row = nn::softmax(Tensor({classes}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(classes))));
        std::copy(row.storage().begin(), row.storage().end(),
                  probs.storage().begin() + static_cast<std::ptrdiff_t>(i * classes));
    }

    ForwardResult result{std::move(logits), std::move(probs), std::nullopt};
    if (training) {
        cache.flat = std::move(flat);
        cache.hidden1 = std::move(h1);
        cache.mask = std::move(mask);
        cache.hidden2 = std::move(h2);
        result.cache = std::move(cache);
    }
    return result;
}

double mean_loss(const ForwardResult& result, std::span<const std::size_t> labels) {
    const std::size_t items = result.logits.dim(0);
    const std::size_t classes = result.logits.dim(1);
    if (labels.size() != items) throw Error(ErrorKind::ShapeMismatch, "one label per batch item required");
    double total = 0.0;
    for (std::size_t i = 0; i < items; ++i) {
        const auto first = result.logits.storage().begin() + static_cast<std::ptrdiff_t>(i * classes);
        const Tensor row({classes}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(classes)));
        total += nn::softmax_cce(row, labels[i]).loss;
    }
    return total / static_cast<double>(items);
}

ParamList backward(const ModelState& state, const ForwardResult& result, std::span<const std::size_t> labels) {
    if (!result.cache) throw Error(ErrorKind::MissingCache, "backward needs a training-mode forward");
    const ForwardCache& cache = *result.cache;
    const ParamList& p = state.params;
    const std::size_t items = result.probs.dim(0);
    const std::size_t classes = result.probs.dim(1);
    if (labels.size() != items) throw Error(ErrorKind::ShapeMismatch, "one label per batch item required");

    ParamList g = zeros_like(p);

    Tensor grad_logits = result.probs;
    for (std::size_t i = 0; i < items; ++i) {
        if (labels[i] >= classes) throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(labels[i]));
        grad_logits.at(i, labels[i]) -= 1.0;
    }
    grad_logits *= 1.0 / static_cast<double>(items);

    Tensor grad_h2;
    nn::dense_backward_accumulate(cache.hidden2, p[kOutW].value, grad_logits, g[kOutW].value, g[kOutB].value, &grad_h2);
    grad_h2 = nn::relu_backward(cache.hidden2, grad_h2);

    const Tensor dropped = cache.mask.size() ? [&] {
        Tensor t = cache.hidden1;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= cache.mask[i];
        return t;
    }() : cache.hidden1;
    Tensor grad_dropped;
    nn::dense_backward_accumulate(dropped, p[kDense2W].value, grad_h2, g[kDense2W].value, g[kDense2B].value,
                                  &grad_dropped);
    Tensor grad_h1 = cache.mask.size() ? nn::dropout_backward(cache.mask, grad_dropped) : grad_dropped;
    grad_h1 = nn::relu_backward(cache.hidden1, grad_h1);

    Tensor grad_flat;
    nn::dense_backward_accumulate(cache.flat, p[kDense1W].value, grad_h1, g[kDense1W].value, g[kDense1B].value,
                                  &grad_flat);

    const std::size_t width = grad_flat.dim(1);
    const Tensor pooled_input(cache.pooled_input_shape);
    const std::size_t pooled_len = (cache.pooled_input_shape[0] - 3) / 3 + 1;
    const std::size_t channels = cache.pooled_input_shape[1];
    for (std::size_t i = 0; i < items; ++i) {
        const auto first = grad_flat.storage().begin() + static_cast<std::ptrdiff_t>(i * width);
        const Tensor grad_pooled({pooled_len, channels}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(width)));
        Tensor grad = nn::avgpool1d_backward(pooled_input, grad_pooled);
        for (std::size_t b = kBlocks; b-- > 0;) {
            grad = block_backward(p, g, b, cache.blocks[i][b], grad, b > 0);
        }
    }
    return g;
}

Tensor stack_rows(std::span<const std::vector<double>> rows) {
    if (rows.empty()) throw Error(ErrorKind::ShapeMismatch, "cannot stack an empty batch");
    const std::size_t width = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * width);
    for (const auto& r : rows) {
        if (r.size() != width) throw Error(ErrorKind::ShapeMismatch, "ragged batch rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), width}, std::move(data));
}

}  // namespace recme
