#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "recme/model.hpp"

namespace recme {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;  // at the worst entry
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares backward() against central differences of the mean batch loss
/// for every parameter entry. Relative error is |a - n| / max(|a|, |n|, floor).
/// Central-difference cancellation is about 2e-16 * loss / h ~ 2e-11, so entries
/// far below the 1e-6 floor would measure roundoff, not the gradient.
/// The spec must have dropout off.
GradCheckReport grad_check(const ModelState& state, const Tensor& batch, std::span<const std::size_t> labels,
                           double h = 1e-5, double floor = 1e-6);

/// input 64, filters [2, 3, 4, 4], dense [8, 4], 3 classes, no dropout.
ModelSpec tiny_spec();

/// grad_check on a seeded tiny model with a small random batch.
GradCheckReport grad_check_tiny(std::uint64_t seed = 42, std::size_t batch_size = 3);

}  // namespace recme
