#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace recme {

/// Mixed-radix decimation-in-time FFT for arbitrary lengths. Lengths are
/// factored into radix-4, radix-2, then odd primes; prime factors are handled
/// by a direct butterfly, so smooth sizes such as 16000 = 2^7 * 5^3 run in
/// O(n log n) without padding.
class FftPlan {
public:
    explicit FftPlan(std::size_t n);

    std::size_t size() const { return n_; }
    const std::vector<std::size_t>& factors() const { return factors_; }

    /// Forward transform X[k] = sum_t x[t] e^{-2 pi i k t / n}.
    void forward(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) const;
    std::vector<std::complex<double>> forward(std::span<const std::complex<double>> in) const;

    /// Shared plan for a given length; safe to call from several threads.
    static std::shared_ptr<const FftPlan> cached(std::size_t n);

private:
    void recurse(const std::complex<double>* in, std::size_t stride, std::complex<double>* out,
                 std::size_t n, std::size_t level, std::complex<double>* scratch) const;

    std::size_t n_;
    std::vector<std::size_t> factors_;
    std::vector<std::complex<double>> twiddles_;  // e^{-2 pi i j / n}
};

/// Complex spectrum of a real sequence (full length, not just the positive half).
std::vector<std::complex<double>> fft_real(std::span<const double> samples);

}  // namespace recme
