#include "recme/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "recme/error.hpp"

namespace recme::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
// Overlapping rows: row t starts at t * C_in and spans K * C_in values.
using Im2Col = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Plain row-order loop: Eigen's vectorized reductions pick a summation order
// from buffer alignment, which breaks run-to-run bit equality.
void add_column_sums(const ConstMatMap& m, Eigen::Map<RowVec>& out) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] += m(r, c);
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

void check_conv_shapes(const Tensor& input, const Tensor& kernel) {
    require(input.rank() == 2, "conv1d input must be [L, C_in], got " + shape_string(input.shape()));
    require(kernel.rank() == 3, "conv1d kernel must be [K, C_in, C_out], got " + shape_string(kernel.shape()));
    require(kernel.dim(0) % 2 == 1, "conv1d kernel size must be odd");
    require(kernel.dim(1) == input.dim(1), "conv1d channel mismatch: input " + shape_string(input.shape()) +
                                               " kernel " + shape_string(kernel.shape()));
}

// Copy of the input with (K-1)/2 zero rows above and below.
std::vector<double> pad_rows(const Tensor& input, std::size_t k) {
    const std::size_t len = input.dim(0);
    const std::size_t ch = input.dim(1);
    const std::size_t pad = (k - 1) / 2;
    std::vector<double> padded((len + k - 1) * ch, 0.0);
    std::copy(input.storage().begin(), input.storage().end(), padded.begin() + static_cast<std::ptrdiff_t>(pad * ch));
    return padded;
}

std::pair<std::size_t, std::size_t> rows_cols(const Tensor& x) {
    if (x.rank() == 1) return {1, x.dim(0)};
    require(x.rank() == 2, "expected rank 1 or 2 tensor, got " + shape_string(x.shape()));
    return {x.dim(0), x.dim(1)};
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    check_conv_shapes(input, kernel);
    const std::size_t len = input.dim(0);
    const std::size_t k = kernel.dim(0);
    const std::size_t cin = kernel.dim(1);
    const std::size_t cout = kernel.dim(2);
    require(bias.size() == cout, "conv1d bias length must equal C_out");

    Tensor out({len, cout});
    MatMap y(out.data(), static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(cout));
    ConstMatMap w(kernel.data(), static_cast<Eigen::Index>(k * cin), static_cast<Eigen::Index>(cout));
    if (k == 1) {
        ConstMatMap x(input.data(), static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(cin));
        y.noalias() = x * w;
    } else {
        const auto padded = pad_rows(input, k);
        Im2Col cols(padded.data(), static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(k * cin),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(cin)));
        y.noalias() = cols * w;
    }
    Eigen::Map<const RowVec> b(bias.data(), static_cast<Eigen::Index>(cout));
    y.rowwise() += b;
    return out;
}

void conv1d_backward_accumulate(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                Tensor& d_kernel, Tensor& d_bias, Tensor* d_input) {
    check_conv_shapes(input, kernel);
    const std::size_t len = input.dim(0);
    const std::size_t k = kernel.dim(0);
    const std::size_t cin = kernel.dim(1);
    const std::size_t cout = kernel.dim(2);
    require(grad_out.shape() == std::vector<std::size_t>{len, cout}, "conv1d upstream gradient shape");
    require(d_kernel.same_shape(kernel), "conv1d kernel gradient shape");
    require(d_bias.size() == cout, "conv1d bias gradient shape");

    const auto rows = static_cast<Eigen::Index>(len);
    const auto ci = static_cast<Eigen::Index>(cin);
    const auto co = static_cast<Eigen::Index>(cout);
    ConstMatMap dy(grad_out.data(), rows, co);
    ConstMatMap w(kernel.data(), static_cast<Eigen::Index>(k) * ci, co);
    MatMap dw(d_kernel.data(), static_cast<Eigen::Index>(k) * ci, co);
    Eigen::Map<RowVec> db(d_bias.data(), co);

    add_column_sums(dy, db);
    if (k == 1) {
        ConstMatMap x(input.data(), rows, ci);
        dw.noalias() += x.transpose() * dy;
        if (d_input) {
            *d_input = Tensor({len, cin});
            MatMap dx(d_input->data(), rows, ci);
            dx.noalias() = dy * w.transpose();
        }
        return;
    }

    const auto padded = pad_rows(input, k);
    Im2Col cols(padded.data(), rows, static_cast<Eigen::Index>(k) * ci, Eigen::OuterStride<>(ci));
    dw.noalias() += cols.transpose() * dy;
    if (!d_input) return;

    // Scatter back through the overlapping im2col rows one kernel tap at a time.
    RowMat dpad = RowMat::Zero(rows + static_cast<Eigen::Index>(k) - 1, ci);
    for (std::size_t tap = 0; tap < k; ++tap) {
        const auto wt = w.middleRows(static_cast<Eigen::Index>(tap) * ci, ci);
        dpad.middleRows(static_cast<Eigen::Index>(tap), rows).noalias() += dy * wt.transpose();
    }
    *d_input = Tensor({len, cin});
    MatMap dx(d_input->data(), rows, ci);
    dx = dpad.middleRows(static_cast<Eigen::Index>((k - 1) / 2), rows);
}

ConvGrads conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out) {
    ConvGrads g{Tensor(), Tensor(kernel.shape()), Tensor({kernel.rank() == 3 ? kernel.dim(2) : 0})};
    conv1d_backward_accumulate(input, kernel, grad_out, g.kernel, g.bias, &g.input);
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    relu_inplace(y);
    return y;
}

void relu_inplace(Tensor& x) {
    for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    require(x.same_shape(grad_out), "relu gradient shape");
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

Tensor maxpool1d(const Tensor& x) {
    require(x.rank() == 2 && x.dim(0) >= 2, "maxpool1d expects [L >= 2, C]");
    const std::size_t out_len = x.dim(0) / 2;
    const std::size_t ch = x.dim(1);
    Tensor y({out_len, ch});
    for (std::size_t t = 0; t < out_len; ++t) {
        const double* a = x.data() + (2 * t) * ch;
        const double* b = a + ch;
        double* o = y.data() + t * ch;
        for (std::size_t c = 0; c < ch; ++c) o[c] = b[c] > a[c] ? b[c] : a[c];
    }
    return y;
}

Tensor maxpool1d_backward(const Tensor& x, const Tensor& grad_out) {
    require(x.rank() == 2 && x.dim(0) >= 2, "maxpool1d expects [L >= 2, C]");
    const std::size_t out_len = x.dim(0) / 2;
    const std::size_t ch = x.dim(1);
    require(grad_out.shape() == std::vector<std::size_t>{out_len, ch}, "maxpool1d upstream gradient shape");
    Tensor g(x.shape());
    for (std::size_t t = 0; t < out_len; ++t) {
        const double* a = x.data() + (2 * t) * ch;
        const double* b = a + ch;
        const double* up = grad_out.data() + t * ch;
        double* ga = g.data() + (2 * t) * ch;
        double* gb = ga + ch;
        for (std::size_t c = 0; c < ch; ++c) {
            if (b[c] > a[c]) {
                gb[c] = up[c];
            } else {
                ga[c] = up[c];
            }
        }
    }
    return g;
}

Tensor avgpool1d(const Tensor& x) {
    require(x.rank() == 2 && x.dim(0) >= 3, "avgpool1d expects [L >= 3, C]");
    const std::size_t out_len = (x.dim(0) - 3) / 3 + 1;
    const std::size_t ch = x.dim(1);
    Tensor y({out_len, ch});
    for (std::size_t t = 0; t < out_len; ++t) {
        const double* w = x.data() + 3 * t * ch;
        double* o = y.data() + t * ch;
        for (std::size_t c = 0; c < ch; ++c) o[c] = (w[c] + w[c + ch] + w[c + 2 * ch]) / 3.0;
    }
    return y;
}

Tensor avgpool1d_backward(const Tensor& x, const Tensor& grad_out) {
    require(x.rank() == 2 && x.dim(0) >= 3, "avgpool1d expects [L >= 3, C]");
    const std::size_t out_len = (x.dim(0) - 3) / 3 + 1;
    const std::size_t ch = x.dim(1);
    require(grad_out.shape() == std::vector<std::size_t>{out_len, ch}, "avgpool1d upstream gradient shape");
    Tensor g(x.shape());
    for (std::size_t t = 0; t < out_len; ++t) {
        const double* up = grad_out.data() + t * ch;
        for (std::size_t j = 0; j < 3; ++j) {
            double* gw = g.data() + (3 * t + j) * ch;
            for (std::size_t c = 0; c < ch; ++c) gw[c] = up[c] / 3.0;
        }
    }
    return g;
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const auto [rows, n_in] = rows_cols(x);
    require(weight.rank() == 2 && weight.dim(0) == n_in,
            "dense weight " + shape_string(weight.shape()) + " does not accept input " + shape_string(x.shape()));
    const std::size_t n_out = weight.dim(1);
    require(bias.size() == n_out, "dense bias length must equal N_out");

    Tensor out(x.rank() == 1 ? std::vector<std::size_t>{n_out} : std::vector<std::size_t>{rows, n_out});
    MatMap y(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_out));
    ConstMatMap xm(x.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_in));
    ConstMatMap w(weight.data(), static_cast<Eigen::Index>(n_in), static_cast<Eigen::Index>(n_out));
    y.noalias() = xm * w;
    y.rowwise() += Eigen::Map<const RowVec>(bias.data(), static_cast<Eigen::Index>(n_out));
    return out;
}

void dense_backward_accumulate(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                               Tensor& d_weight, Tensor& d_bias, Tensor* d_input) {
    const auto [rows, n_in] = rows_cols(x);
    require(weight.rank() == 2 && weight.dim(0) == n_in, "dense weight shape");
    const std::size_t n_out = weight.dim(1);
    require(grad_out.size() == rows * n_out, "dense upstream gradient shape");
    require(d_weight.same_shape(weight) && d_bias.size() == n_out, "dense gradient accumulator shape");

    const auto r = static_cast<Eigen::Index>(rows);
    const auto ni = static_cast<Eigen::Index>(n_in);
    const auto no = static_cast<Eigen::Index>(n_out);
    ConstMatMap xm(x.data(), r, ni);
    ConstMatMap dy(grad_out.data(), r, no);
    ConstMatMap w(weight.data(), ni, no);
    MatMap dw(d_weight.data(), ni, no);
    dw.noalias() += xm.transpose() * dy;
    Eigen::Map<RowVec> db(d_bias.data(), no);
    add_column_sums(dy, db);
    if (d_input) {
        *d_input = Tensor(x.shape());
        MatMap dx(d_input->data(), r, ni);
        dx.noalias() = dy * w.transpose();
    }
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out) {
    DenseGrads g{Tensor(), Tensor(weight.shape()), Tensor({weight.rank() == 2 ? weight.dim(1) : 0})};
    dense_backward_accumulate(x, weight, grad_out, g.weight, g.bias, &g.input);
    return g;
}

DropoutResult dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorKind::InvalidArgument, "dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) return {x, Tensor(x.shape(), 1.0)};
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    DropoutResult r{Tensor(x.shape()), Tensor(x.shape())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.mask[i] = uniform(rng) < rate ? 0.0 : keep_scale;
        r.output[i] = x[i] * r.mask[i];
    }
    return r;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) {
    require(mask.same_shape(grad_out), "dropout gradient shape");
    Tensor g(mask.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
    return g;
}

Tensor softmax(const Tensor& logits) {
    require(logits.rank() == 1 && logits.size() > 0, "softmax expects a non-empty vector");
    const double top = *std::max_element(logits.storage().begin(), logits.storage().end());
    Tensor p(logits.shape());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - top);
        sum += p[i];
    }
    p *= 1.0 / sum;
    return p;
}

SoftmaxLoss softmax_cce(const Tensor& logits, std::size_t label) {
    if (label >= logits.size()) {
        throw Error(ErrorKind::LabelOutOfRange,
                    "label " + std::to_string(label) + " with " + std::to_string(logits.size()) + " classes");
    }
    SoftmaxLoss r{softmax(logits), 0.0};
    // log-sum-exp form keeps the loss finite even when probs[label] underflows.
    const double top = *std::max_element(logits.storage().begin(), logits.storage().end());
    double sum = 0.0;
    for (double v : logits.values()) sum += std::exp(v - top);
    r.loss = std::log(sum) - (logits[label] - top);
    return r;
}

Tensor softmax_cce_backward(const Tensor& probs, std::size_t label) {
    if (label >= probs.size()) throw Error(ErrorKind::LabelOutOfRange, "label out of range");
    Tensor g = probs;
    g[label] -= 1.0;
    return g;
}

}  // namespace recme::nn
