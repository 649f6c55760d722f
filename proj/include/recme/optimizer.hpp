#pragma once

#include <cstdint>

#include "recme/model.hpp"

namespace recme {

struct LrSchedule {
    double lr0 = 1e-4;
    double decay_factor = 0.7;
    std::uint64_t decay_every_steps = 250;
};

/// lr0 * decay_factor^floor(step / decay_every_steps)
double lr_at_step(std::uint64_t global_step, const LrSchedule& schedule);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamMoments {
    ParamList first;
    ParamList second;
    std::uint64_t t = 0;  // number of updates applied so far
};

AdamMoments adam_init(const ParamList& params);

/// One bias-corrected Adam update; increments moments.t first so the update
/// uses the 1-based step count.
void adam_step(ParamList& params, const ParamList& grads, double lr, AdamMoments& moments,
               const AdamConfig& config = {});

void sgd_step(ParamList& params, const ParamList& grads, double lr);

}  // namespace recme
