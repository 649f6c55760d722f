#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "recme/tensor.hpp"

// Layer primitives with hand-written backward passes. Sequence tensors are
// laid out [length, channels]; dense layers accept [features] or [batch, features].
namespace recme::nn {

using Rng = std::mt19937_64;

// conv1d with "same" zero padding; kernel is [K, C_in, C_out] with K odd.
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};

ConvGrads conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out);

// Adds parameter gradients into d_kernel / d_bias and, when d_input is
// non-null, overwrites it with the input gradient.
void conv1d_backward_accumulate(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                Tensor& d_kernel, Tensor& d_bias, Tensor* d_input);

Tensor relu(const Tensor& x);
void relu_inplace(Tensor& x);
// Gradient is passed where x > 0 and zeroed elsewhere. x may be either the
// pre-activation or the activation output; both give the same mask.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// Pool 2, stride 2. Ties pick the earlier position.
Tensor maxpool1d(const Tensor& x);
Tensor maxpool1d_backward(const Tensor& x, const Tensor& grad_out);

// Pool 3, stride 3, trailing remainder dropped.
Tensor avgpool1d(const Tensor& x);
Tensor avgpool1d_backward(const Tensor& x, const Tensor& grad_out);

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out);
void dense_backward_accumulate(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                               Tensor& d_weight, Tensor& d_bias, Tensor* d_input);

// Inverted dropout. The returned mask holds 0 or 1/(1-rate) per element and
// is all ones outside training mode.
struct DropoutResult {
    Tensor output;
    Tensor mask;
};

DropoutResult dropout(const Tensor& x, double rate, Rng& rng, bool training);
Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out);

struct SoftmaxLoss {
    Tensor probs;
    double loss = 0.0;
};

Tensor softmax(const Tensor& logits);
SoftmaxLoss softmax_cce(const Tensor& logits, std::size_t label);
// d loss / d logits = probs - onehot(label)
Tensor softmax_cce_backward(const Tensor& probs, std::size_t label);

}  // namespace recme::nn
