#include "recme/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "recme/error.hpp"

namespace recme {
namespace {

std::vector<std::size_t> factorize(std::size_t n) {
    std::vector<std::size_t> out;
    while (n % 4 == 0) {
        out.push_back(4);
        n /= 4;
    }
    if (n % 2 == 0) {
        out.push_back(2);
        n /= 2;
    }
    for (std::size_t p = 3; p * p <= n; p += 2) {
        while (n % p == 0) {
            out.push_back(p);
            n /= p;
        }
    }
    if (n > 1) out.push_back(n);
    return out;
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n), factors_(factorize(n)), twiddles_(n) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "FFT length must be positive");
    for (std::size_t j = 0; j < n; ++j) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        twiddles_[j] = {std::cos(angle), std::sin(angle)};
    }
}

void FftPlan::recurse(const std::complex<double>* in, std::size_t stride, std::complex<double>* out,
                      std::size_t n, std::size_t level, std::complex<double>* scratch) const {
    if (n == 1) {
        out[0] = in[0];
        return;
    }
    const std::size_t p = factors_[level];
    const std::size_t m = n / p;
    for (std::size_t r = 0; r < p; ++r) {
        recurse(in + r * stride, stride * p, out + r * m, m, level + 1, scratch);
    }

    const std::size_t tw_step = n_ / n;  // W_n^e == twiddles_[e * tw_step]
    if (p == 2) {
        for (std::size_t k = 0; k < m; ++k) {
            const std::complex<double> a = out[k];
            const std::complex<double> b = out[k + m] * twiddles_[k * tw_step];
            out[k] = a + b;
            out[k + m] = a - b;
        }
        return;
    }

    const std::size_t root_step = n_ / p;  // W_p^e == twiddles_[e * root_step]
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t r = 0; r < p; ++r) {
            scratch[r] = r == 0 ? out[k] : out[r * m + k] * twiddles_[(r * k * tw_step) % n_];
        }
        for (std::size_t q = 0; q < p; ++q) {
            std::complex<double> acc = scratch[0];
            for (std::size_t r = 1; r < p; ++r) {
                acc += scratch[r] * twiddles_[((r * q) % p) * root_step];
            }
            out[k + q * m] = acc;
        }
    }
}

void FftPlan::forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) const {
    if (in.size() != n_ || out.size() != n_) {
        throw Error(ErrorKind::ShapeMismatch, "FFT buffer length does not match plan");
    }
    std::size_t widest = 1;
    for (std::size_t f : factors_) widest = std::max(widest, f);
    std::vector<std::complex<double>> scratch(widest);
    recurse(in.data(), 1, out.data(), n_, 0, scratch.data());
}

std::vector<std::complex<double>> FftPlan::forward(std::span<const std::complex<double>> in) const {
    std::vector<std::complex<double>> out(n_);
    forward(in, out);
    return out;
}

std::shared_ptr<const FftPlan> FftPlan::cached(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::shared_ptr<const FftPlan>> plans;
    std::lock_guard lock(mutex);
    auto& slot = plans[n];
    if (!slot) slot = std::make_shared<const FftPlan>(n);
    return slot;
}

std::vector<std::complex<double>> fft_real(std::span<const double> samples) {
    const auto plan = FftPlan::cached(samples.size());
    std::vector<std::complex<double>> in(samples.begin(), samples.end());
    return plan->forward(in);
}

}  // namespace recme
