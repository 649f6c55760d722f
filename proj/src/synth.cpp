#include "recme/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "recme/error.hpp"

namespace recme::synth {
namespace fs = std::filesystem;

namespace {

constexpr double kMinFormant = 200.0;
constexpr double kMaxFormant = 3000.0;
constexpr double kOwnSpacing = 250.0;    // between one speaker's formants
constexpr double kOtherSpacing = 100.0;  // preferred gap to earlier speakers' formants
constexpr double kJitter = 0.02;
constexpr double kFloorNoise = 0.01;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed ^ (salt * 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::size_t collisions(const std::array<double, 3>& f, const std::vector<SpeakerProfile>& earlier) {
    std::size_t n = 0;
    for (const auto& other : earlier) {
        for (double a : f) {
            for (double b : other.formants) n += std::abs(a - b) < kOtherSpacing;
        }
    }
    return n;
}

void normalize_peak(std::vector<double>& x, double target) {
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
        for (double& v : x) v *= target / peak;
    }
}

}  // namespace

std::vector<SpeakerProfile> speaker_profiles(std::size_t count, std::uint64_t seed) {
    std::vector<SpeakerProfile> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::mt19937_64 rng(mix(seed, i + 1));
        std::uniform_real_distribution<double> freq(kMinFormant, kMaxFormant);
        std::uniform_real_distribution<double> amp(0.15, 0.3);

        std::array<double, 3> best{};
        std::size_t best_hits = SIZE_MAX;
        for (int attempt = 0; attempt < 500 && best_hits > 0; ++attempt) {
            std::array<double, 3> f{freq(rng), freq(rng), freq(rng)};
            std::sort(f.begin(), f.end());
            if (f[1] - f[0] < kOwnSpacing || f[2] - f[1] < kOwnSpacing) continue;
            const std::size_t hits = collisions(f, out);
            if (hits < best_hits) {
                best = f;
                best_hits = hits;
            }
        }
        SpeakerProfile p;
        char name[32];
        std::snprintf(name, sizeof name, "speaker_%02zu", i + 1);
        p.name = name;
        p.formants = best;
        for (double& a : p.amplitudes) a = amp(rng);
        out.push_back(std::move(p));
    }
    return out;
}

PcmWave speaker_wave(const SpeakerProfile& profile, std::size_t seconds, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-kJitter / 2, kJitter / 2);
    std::uniform_real_distribution<double> vibrato_rate(3.0, 7.0);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::normal_distribution<double> floor_noise(0.0, kFloorNoise);

    PcmWave wave;
    wave.sample_rate = kSampleRate;
    wave.channels = 1;
    wave.samples.resize(seconds * kClipLen);
    for (std::size_t s = 0; s < seconds; ++s) {
        // Each formant drifts around its nominal value: a fixed offset for the
        // second plus a slow vibrato, together bounded by +/-kJitter.
        std::array<double, 3> centre{}, rate{}, vib_phase{}, ph{};
        for (std::size_t k = 0; k < 3; ++k) {
            centre[k] = profile.formants[k] * (1.0 + offset(rng));
            rate[k] = vibrato_rate(rng);
            vib_phase[k] = phase(rng);
            ph[k] = phase(rng);
        }
        double* out = wave.samples.data() + s * kClipLen;
        for (std::size_t n = 0; n < kClipLen; ++n) {
            const double t = static_cast<double>(n) / kSampleRate;
            double v = floor_noise(rng);
            for (std::size_t k = 0; k < 3; ++k) {
                const double f = centre[k] * (1.0 + kJitter / 2 * std::sin(kTwoPi * rate[k] * t + vib_phase[k]));
                ph[k] += kTwoPi * f / kSampleRate;
                v += profile.amplitudes[k] * std::sin(ph[k]);
            }
            out[n] = std::clamp(v, -1.0, 1.0);
        }
    }
    return wave;
}

std::string noise_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::White: return "white";
        case NoiseKind::Pink: return "pink";
        case NoiseKind::Hum: return "hum";
        case NoiseKind::Clicks: return "clicks";
        case NoiseKind::Hiss: return "hiss";
        case NoiseKind::Sweep: return "sweep";
    }
    return "noise";
}

PcmWave noise_wave(NoiseKind kind, std::size_t seconds, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    const std::size_t n = seconds * kClipLen;
    std::vector<double> x(n, 0.0);
    const double fs = kSampleRate;

    switch (kind) {
        case NoiseKind::White:
            for (double& v : x) v = uniform(rng);
            break;
        case NoiseKind::Pink: {
            // Paul Kellet's economy pink filter.
            double b0 = 0, b1 = 0, b2 = 0;
            for (double& v : x) {
                const double w = uniform(rng);
                b0 = 0.99765 * b0 + w * 0.0990460;
                b1 = 0.96300 * b1 + w * 0.2965164;
                b2 = 0.57000 * b2 + w * 1.0526913;
                v = b0 + b1 + b2 + w * 0.1848;
            }
            break;
        }
        case NoiseKind::Hum:
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / fs;
                for (int h = 1; h <= 4; ++h) x[i] += std::sin(kTwoPi * 50.0 * h * t) / h;
            }
            break;
        case NoiseKind::Clicks: {
            std::uniform_int_distribution<std::size_t> where(0, n - 1);
            const std::size_t count = seconds * 20;
            for (std::size_t c = 0; c < count; ++c) {
                const std::size_t at = where(rng);
                const double sign = uniform(rng) < 0 ? -1.0 : 1.0;
                for (std::size_t k = 0; k < 40 && at + k < n; ++k) x[at + k] += sign * std::exp(-0.15 * k);
            }
            break;
        }
        case NoiseKind::Hiss: {
            // RBJ band-pass biquad centred at 5 kHz, Q = 1.
            const double w0 = kTwoPi * 5000.0 / fs;
            const double alpha = std::sin(w0) / 2.0;
            const double a0 = 1.0 + alpha;
            const double b0 = alpha / a0, b2 = -alpha / a0;
            const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
            double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
            for (double& v : x) {
                const double in = uniform(rng);
                const double out = b0 * in + b2 * x2 - a1 * y1 - a2 * y2;
                x2 = x1;
                x1 = in;
                y2 = y1;
                y1 = out;
                v = out;
            }
            break;
        }
        case NoiseKind::Sweep: {
            // Linear chirp 100 Hz -> 4 kHz repeating every second.
            double phase = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double within = static_cast<double>(i % kClipLen) / fs;
                const double f = 100.0 + (4000.0 - 100.0) * within;
                phase += kTwoPi * f / fs;
                x[i] = std::sin(phase);
            }
            break;
        }
    }
    normalize_peak(x, 0.5);
    return PcmWave{kSampleRate, 1, std::move(x)};
}

std::vector<SpeakerProfile> synth_dataset(const SynthOptions& options, const fs::path& out_dir) {
    if (options.num_speakers < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 synthetic speakers");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

    const auto profiles = speaker_profiles(options.num_speakers, options.seed);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const fs::path dir = out_dir / profiles[i].name;
        fs::create_directories(dir, ec);
        if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());
        write_wav_file(dir / "recording.wav",
                       speaker_wave(profiles[i], options.seconds_per_speaker, mix(options.seed, 1000 + i)));
    }
    const fs::path noise_dir = out_dir / "_noise";
    fs::create_directories(noise_dir, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + noise_dir.string());
    for (std::size_t k = 0; k < kNoiseKinds.size(); ++k) {
        write_wav_file(noise_dir / (noise_name(kNoiseKinds[k]) + ".wav"),
                       noise_wave(kNoiseKinds[k], options.noise_seconds, mix(options.seed, 2000 + k)));
    }
    return profiles;
}

}  // namespace recme::synth
