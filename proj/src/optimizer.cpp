#include "recme/optimizer.hpp"

#include <cmath>

#include "recme/error.hpp"

namespace recme {
namespace {

void check_pair(const ParamList& params, const ParamList& grads) {
    if (params.size() != grads.size()) throw Error(ErrorKind::ShapeMismatch, "gradient list length differs from params");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].value.same_shape(grads[i].value)) {
            throw Error(ErrorKind::ShapeMismatch, "gradient shape differs for " + params[i].name);
        }
    }
}

}  // namespace

double lr_at_step(std::uint64_t global_step, const LrSchedule& schedule) {
    if (schedule.decay_every_steps == 0) throw Error(ErrorKind::InvalidArgument, "decay_every_steps must be >= 1");
    const auto decays = static_cast<double>(global_step / schedule.decay_every_steps);
    return schedule.lr0 * std::pow(schedule.decay_factor, decays);
}

AdamMoments adam_init(const ParamList& params) {
    return {zeros_like(params), zeros_like(params), 0};
}

void adam_step(ParamList& params, const ParamList& grads, double lr, AdamMoments& moments, const AdamConfig& config) {
    check_pair(params, grads);
    check_pair(params, moments.first);
    check_pair(params, moments.second);
    ++moments.t;
    const double t = static_cast<double>(moments.t);
    const double correct1 = 1.0 - std::pow(config.beta1, t);
    const double correct2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        double* w = params[p].value.data();
        const double* g = grads[p].value.data();
        double* m = moments.first[p].value.data();
        double* v = moments.second[p].value.data();
        const std::size_t n = params[p].value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correct1;
            const double v_hat = v[i] / correct2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

void sgd_step(ParamList& params, const ParamList& grads, double lr) {
    check_pair(params, grads);
    for (std::size_t p = 0; p < params.size(); ++p) {
        double* w = params[p].value.data();
        const double* g = grads[p].value.data();
        for (std::size_t i = 0; i < params[p].value.size(); ++i) w[i] -= lr * g[i];
    }
}

}  // namespace recme
