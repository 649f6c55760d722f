#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recme/audio_io.hpp"

// Desk-scale stand-in for human recordings: each synthetic speaker is a
// fixed chord of three "formant" tones that wobble slightly per second.
namespace recme::synth {

struct SpeakerProfile {
    std::string name;
    std::array<double, 3> formants{};    // Hz, within [200, 3000]
    std::array<double, 3> amplitudes{};  // linear
};

/// Profiles for speakers 1..count. Speaker i depends only on (seed, i) and
/// the speakers before it, so a larger count extends a smaller one.
std::vector<SpeakerProfile> speaker_profiles(std::size_t count, std::uint64_t seed);

/// `seconds` of 16 kHz mono audio. Every one-second segment gets fresh random
/// phases, +/-2% frequency jitter and low-level broadband noise.
PcmWave speaker_wave(const SpeakerProfile& profile, std::size_t seconds, std::uint64_t seed);

enum class NoiseKind { White, Pink, Hum, Clicks, Hiss, Sweep };
inline constexpr std::array<NoiseKind, 6> kNoiseKinds{NoiseKind::White, NoiseKind::Pink,   NoiseKind::Hum,
                                                      NoiseKind::Clicks, NoiseKind::Hiss, NoiseKind::Sweep};
std::string noise_name(NoiseKind kind);
PcmWave noise_wave(NoiseKind kind, std::size_t seconds, std::uint64_t seed);

struct SynthOptions {
    std::size_t num_speakers = 5;
    std::size_t seconds_per_speaker = 60;
    std::size_t noise_seconds = 10;
    std::uint64_t seed = 42;
};

/// Writes <out>/<speaker>/recording.wav per speaker and <out>/_noise/<kind>.wav.
/// Byte-identical for equal options.
std::vector<SpeakerProfile> synth_dataset(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace recme::synth
