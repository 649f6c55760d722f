#include <doctest.h>

#include "oracles.hpp"
#include "recme/error.hpp"
#include "recme/features.hpp"
#include "recme/fft.hpp"

using namespace recme;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> x(n);
    for (double& v : x) v = d(rng);
    return x;
}

double max_rel(const std::vector<double>& got, const std::vector<std::complex<double>>& ref) {
    double peak = 0.0;
    for (std::size_t k = 0; k < got.size(); ++k) peak = std::max(peak, std::abs(ref[k]));
    double worst = 0.0;
    // Relative to each bin, floored at 1e-9 of the spectrum peak so exact zeros do not divide by zero.
    for (std::size_t k = 0; k < got.size(); ++k) {
        const double r = std::abs(ref[k]);
        worst = std::max(worst, std::abs(got[k] - r) / std::max(r, 1e-9 * peak));
    }
    return worst;
}

}  // namespace

TEST_CASE("dft_oracle on tiny inputs") {
    const auto a = dft_oracle(std::vector<double>{1, 0, 0, 0});
    for (const auto& x : a) {
        CHECK(x.real() == doctest::Approx(1.0));
        CHECK(std::abs(x.imag()) < 1e-15);
    }
    const auto b = dft_oracle(std::vector<double>{1, 1, 1, 1});
    CHECK(b[0].real() == doctest::Approx(4.0));
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(b[k]) < 1e-15);
}

TEST_CASE("dft_oracle satisfies Parseval and linearity") {
    const std::size_t n = 1000;
    const auto x = random_signal(n, 1);
    const auto y = random_signal(n, 2);
    const auto X = dft_oracle(x);
    const auto Y = dft_oracle(y);
    double time = 0, freq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        time += x[i] * x[i];
        freq += std::norm(X[i]);
    }
    CHECK(std::abs(time - freq / n) / time < 1e-9);

    std::vector<double> mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = 2.5 * x[i] - 0.75 * y[i];
    const auto M = dft_oracle(mix);
    double worst = 0, scale = 0;
    for (std::size_t k = 0; k < n; ++k) {
        worst = std::max(worst, std::abs(M[k] - (2.5 * X[k] - 0.75 * Y[k])));
        scale = std::max(scale, std::abs(M[k]));
    }
    CHECK(worst / scale < 1e-9);
}

TEST_CASE("FFT matches the direct DFT for assorted lengths") {
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 12u, 16u, 30u, 49u, 97u, 128u, 250u, 1000u, 1024u, 2000u}) {
        CAPTURE(n);
        const auto x = random_signal(n, n);
        const auto fast = fft_real(x);
        const auto slow = dft_oracle(x);
        double worst = 0, scale = 1e-300;
        for (std::size_t k = 0; k < n; ++k) {
            worst = std::max(worst, std::abs(fast[k] - slow[k]));
            scale = std::max(scale, std::abs(slow[k]));
        }
        CHECK(worst / scale < 1e-12);
    }
}

TEST_CASE("rfft magnitudes match the oracle within 1e-6 relative for 16, 128, 1000 and 16000") {
    for (std::size_t n : {16u, 128u, 1000u, 16000u}) {
        CAPTURE(n);
        const auto x = random_signal(n, 100 + n);
        const auto mags = real_fft_magnitudes(x);
        REQUIRE(mags.size() == n / 2);
        CHECK(max_rel(mags, dft_oracle(x)) <= 1e-6);
    }
}

TEST_CASE("16000-point plan factors without padding") {
    const auto plan = FftPlan::cached(16000);
    std::size_t product = 1;
    for (std::size_t f : plan->factors()) {
        CHECK((f == 2 || f == 4 || f == 5));
        product *= f;
    }
    CHECK(product == 16000);
}

TEST_CASE("Parseval and conjugate symmetry of the full complex transform") {
    const std::size_t n = 16000;
    const auto x = random_signal(n, 7);
    const auto X = fft_real(x);
    double time = 0, freq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        time += x[i] * x[i];
        freq += std::norm(X[i]);
    }
    CHECK(std::abs(time - freq / n) / time < 1e-9);
    double worst = 0;
    for (std::size_t k = 1; k < n; ++k) worst = std::max(worst, std::abs(X[k] - std::conj(X[n - k])));
    CHECK(worst < 1e-9);
}

TEST_CASE("rfft_magnitude on clips") {
    SUBCASE("impulse gives a flat spectrum") {
        Clip c{std::vector<double>(kClipLen, 0.0), "", 0};
        c.samples[0] = 1.0;
        const auto s = rfft_magnitude(c);
        REQUIRE(s.bins.size() == kFeatureLen);
        for (double v : s.bins) REQUIRE(v == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("1 kHz cosine peaks at bin 1000 with magnitude n/2") {
        Clip c{std::vector<double>(kClipLen), "", 0};
        for (std::size_t t = 0; t < kClipLen; ++t) c.samples[t] = std::cos(2 * std::numbers::pi * 1000.0 * t / 16000.0);
        const auto s = rfft_magnitude(c);
        CHECK(s.bins[1000] == doctest::Approx(8000.0).epsilon(1e-9));
        for (std::size_t k = 0; k < s.bins.size(); ++k) {
            if (k != 1000) REQUIRE(s.bins[k] < 1e-6);
        }
    }
    SUBCASE("values are finite and non-negative") {
        Clip c{random_signal(kClipLen, 9), "", 0};
        for (double v : rfft_magnitude(c).bins) REQUIRE((std::isfinite(v) && v >= 0.0));
    }
    SUBCASE("wrong length is rejected") {
        Clip c{std::vector<double>(100), "", 0};
        CHECK_THROWS_AS(rfft_magnitude(c), Error);
    }
}
