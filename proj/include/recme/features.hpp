#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "recme/audio_io.hpp"

namespace recme {

inline constexpr std::size_t kFeatureLen = kClipLen / 2;

// Magnitudes of the first half of a clip's DFT. Bin k is k Hz for a
// one-second window. DC is kept and nothing is scaled or log-compressed.
struct Spectrum {
    std::vector<double> bins;
};

/// Magnitudes |X[k]| for k in [0, n/2) of an arbitrary-length real signal.
std::vector<double> real_fft_magnitudes(std::span<const double> samples);

Spectrum rfft_magnitude(const Clip& clip);

/// Direct O(n^2) summation X[k] = sum x[t] e^(-2 pi i k t / n). Reference only.
std::vector<std::complex<double>> dft_oracle(std::span<const double> samples);

}  // namespace recme
