#include "recme/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "recme/error.hpp"

namespace recme {

GradCheckReport grad_check(const ModelState& state, const Tensor& batch, std::span<const std::size_t> labels,
                           double h, double floor) {
    if (state.spec.dropout_rate != 0.0) throw Error(ErrorKind::InvalidArgument, "gradient check needs dropout off");
    const ForwardResult fwd = forward(state, batch, Mode::Train);
    const ParamList grads = backward(state, fwd, labels);

    GradCheckReport report;
    ModelState probe = state;
    for (std::size_t p = 0; p < probe.params.size(); ++p) {
        Tensor& w = probe.params[p].value;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + h;
            const double up = mean_loss(forward(probe, batch, Mode::Infer), labels);
            w[i] = saved - h;
            const double down = mean_loss(forward(probe, batch, Mode::Infer), labels);
            w[i] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grads[p].value[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            if (!(rel <= report.max_rel_error)) {
                report.max_rel_error = rel;
                report.worst_param = probe.params[p].name;
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

ModelSpec tiny_spec() {
    ModelSpec spec;
    spec.input_len = 64;
    spec.block_filters = {2, 3, 4, 4};
    spec.dense_sizes = {8, 4};
    spec.dropout_rate = 0.0;
    spec.num_classes = 3;
    spec.input_scale = 1.0;
    return spec;
}

GradCheckReport grad_check_tiny(std::uint64_t seed, std::size_t batch_size) {
    const ModelSpec spec = tiny_spec();
    ModelState state = make_model(spec, {"a", "b", "c"}, seed);
    std::mt19937_64 rng(seed ^ 0x5eedull);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    // Zero biases put every all-zero input window exactly on a ReLU kink,
    // where the central difference sees half the slope. Nudge them off it.
    std::uniform_real_distribution<double> nudge(-0.1, 0.1);
    for (auto& p : state.params) {
        if (p.value.rank() == 1) {
            for (double& v : p.value.values()) v = nudge(rng);
        }
    }
    Tensor batch({batch_size, spec.input_len});
    for (double& v : batch.values()) v = value(rng);
    std::vector<std::size_t> labels(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) labels[i] = i % spec.num_classes;
    return grad_check(state, batch, labels);
}

}  // namespace recme
