#include "recme/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "recme/error.hpp"
#include "recme/fft.hpp"

namespace recme {

std::vector<double> real_fft_magnitudes(std::span<const double> samples) {
    const auto spectrum = fft_real(samples);
    std::vector<double> mags(samples.size() / 2);
    for (std::size_t k = 0; k < mags.size(); ++k) mags[k] = std::abs(spectrum[k]);
    return mags;
}

Spectrum rfft_magnitude(const Clip& clip) {
    if (clip.samples.size() != kClipLen) {
        throw Error(ErrorKind::ShapeMismatch, "clip must hold exactly 16000 samples");
    }
    return Spectrum{real_fft_magnitudes(clip.samples)};
}

std::vector<std::complex<double>> dft_oracle(std::span<const double> samples) {
    const std::size_t n = samples.size();
    // k*t is reduced mod n so every twiddle comes from one table of exact angles.
    std::vector<std::complex<double>> twiddle(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        twiddle[j] = {std::cos(a), std::sin(a)};
    }
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        std::size_t j = 0;
        for (std::size_t t = 0; t < n; ++t) {
            acc += samples[t] * twiddle[j];
            j += k;
            if (j >= n) j -= n;
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace recme
