#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace recme {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipLen = 16000;

// Decoded audio. Samples are interleaved by channel and normalized to [-1, 1].
struct PcmWave {
    int sample_rate = kSampleRate;
    int channels = 1;
    std::vector<double> samples;

    std::size_t frames() const { return channels > 0 ? samples.size() / channels : 0; }
    double seconds() const { return static_cast<double>(frames()) / sample_rate; }
};

// One second of mono 16 kHz audio.
struct Clip {
    std::vector<double> samples;  // exactly kClipLen values
    std::string source_id;
    std::size_t index = 0;
};

PcmWave decode_wav(std::span<const std::uint8_t> bytes);

// Always writes 16-bit PCM; amplitudes are rounded and saturated to the int16 range.
std::vector<std::uint8_t> encode_wav(const PcmWave& wave);

PcmWave read_wav_file(const std::filesystem::path& path);
void write_wav_file(const std::filesystem::path& path, const PcmWave& wave);

PcmWave downmix_mono(const PcmWave& wave);

/// Linear-interpolation resampler. Output sample i is the input evaluated at
/// time i / target_rate; the last input sample is held past the end.
PcmWave resample(const PcmWave& wave, int target_rate);

/// Splits a mono 16 kHz wave into consecutive one-second clips. The trailing
/// partial second is dropped.
std::vector<Clip> clip_into_seconds(const PcmWave& wave, const std::string& source_id = {});

/// downmix_mono followed by resample to 16 kHz.
PcmWave to_model_rate(const PcmWave& wave);

double peak_amplitude(std::span<const double> samples);

}  // namespace recme
