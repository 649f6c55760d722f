#include "recme/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "recme/error.hpp"

namespace recme {
namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

struct FormatChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits = 0;
};

double decode_sample(const std::uint8_t* p, const FormatChunk& fmt) {
    if (fmt.format == kFormatFloat) {
        float f = std::bit_cast<float>(read_u32(p));
        if (!std::isfinite(f)) throw Error(ErrorKind::MalformedContainer, "non-finite float sample");
        return std::clamp(static_cast<double>(f), -1.0, 1.0);
    }
    switch (fmt.bits) {
        case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
        case 16: return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
        case 24: {
            std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
            if (v & 0x800000) v -= 0x1000000;
            return v / 8388608.0;
        }
        case 32: return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
        default: break;
    }
    throw Error(ErrorKind::UnsupportedEncoding, "unsupported bit depth " + std::to_string(fmt.bits));
}

}  // namespace

PcmWave decode_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw Error(ErrorKind::MalformedContainer, "missing RIFF/WAVE magic");
    }

    std::optional<FormatChunk> fmt;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* hdr = bytes.data() + pos;
        const std::uint32_t size = read_u32(hdr + 4);
        const std::size_t body = pos + 8;
        if (size > bytes.size() - body) {
            throw Error(ErrorKind::MalformedContainer, "truncated chunk");
        }
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (size < 16) throw Error(ErrorKind::MalformedContainer, "short fmt chunk");
            const std::uint8_t* f = bytes.data() + body;
            FormatChunk c;
            c.format = read_u16(f);
            c.channels = read_u16(f + 2);
            c.sample_rate = read_u32(f + 4);
            c.block_align = read_u16(f + 12);
            c.bits = read_u16(f + 14);
            if (c.format == kFormatExtensible) {
                if (size < 26) throw Error(ErrorKind::MalformedContainer, "short extensible fmt chunk");
                // The first two bytes of the sub-format GUID carry the real format tag.
                c.format = read_u16(f + 24);
            }
            fmt = c;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = bytes.subspan(body, size);
            have_data = true;
        }
        pos = body + size + (size & 1u);
    }

    if (!fmt) throw Error(ErrorKind::MalformedContainer, "missing fmt chunk");
    if (!have_data) throw Error(ErrorKind::MalformedContainer, "missing data chunk");
    if (fmt->format != kFormatPcm && fmt->format != kFormatFloat) {
        throw Error(ErrorKind::UnsupportedEncoding, "compressed format tag " + std::to_string(fmt->format));
    }
    if (fmt->format == kFormatFloat && fmt->bits != 32) {
        throw Error(ErrorKind::UnsupportedEncoding, "only 32-bit float is supported");
    }
    if (fmt->channels == 0 || fmt->sample_rate == 0) {
        throw Error(ErrorKind::MalformedContainer, "zero channels or sample rate");
    }
    const std::size_t width = fmt->bits / 8;
    if (width == 0 || fmt->bits % 8 != 0) {
        throw Error(ErrorKind::UnsupportedEncoding, "unsupported bit depth " + std::to_string(fmt->bits));
    }
    const std::size_t frame_bytes = width * fmt->channels;
    const std::size_t frames = data.size() / frame_bytes;

    PcmWave wave;
    wave.sample_rate = static_cast<int>(fmt->sample_rate);
    wave.channels = fmt->channels;
    wave.samples.resize(frames * fmt->channels);
    for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        wave.samples[i] = decode_sample(data.data() + i * width, *fmt);
    }
    return wave;
}

std::vector<std::uint8_t> encode_wav(const PcmWave& wave) {
    if (wave.channels < 1 || wave.sample_rate <= 0 || wave.samples.size() % wave.channels != 0) {
        throw Error(ErrorKind::InvalidArgument, "inconsistent wave layout");
    }
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
    const auto channels = static_cast<std::uint16_t>(wave.channels);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_bytes);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, channels);
    put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * channels * 2);
    put_u16(out, static_cast<std::uint16_t>(channels * 2));
    put_u16(out, 16);
    put_tag(out, "data");
    put_u32(out, data_bytes);
    for (double s : wave.samples) {
        const double scaled = std::round(s * 32768.0);
        const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    return out;
}

PcmWave read_wav_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

void write_wav_file(const std::filesystem::path& path, const PcmWave& wave) {
    const auto bytes = encode_wav(wave);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

PcmWave downmix_mono(const PcmWave& wave) {
    if (wave.channels < 1) throw Error(ErrorKind::InvalidArgument, "channels must be >= 1");
    if (wave.channels == 1) return wave;
    PcmWave out;
    out.sample_rate = wave.sample_rate;
    out.channels = 1;
    const std::size_t frames = wave.frames();
    out.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double sum = 0.0;
        for (int c = 0; c < wave.channels; ++c) sum += wave.samples[f * wave.channels + c];
        out.samples[f] = sum / wave.channels;
    }
    return out;
}

PcmWave resample(const PcmWave& wave, int target_rate) {
    if (wave.channels != 1) throw Error(ErrorKind::InvalidArgument, "resample expects mono input");
    if (target_rate <= 0 || wave.sample_rate <= 0) throw Error(ErrorKind::InvalidArgument, "rates must be positive");
    if (target_rate == wave.sample_rate) return wave;

    const std::uint64_t src = static_cast<std::uint64_t>(wave.sample_rate);
    const std::uint64_t dst = static_cast<std::uint64_t>(target_rate);
    const std::size_t n = wave.samples.size();
    const std::size_t out_len = static_cast<std::size_t>(n * dst / src);

    PcmWave out;
    out.sample_rate = target_rate;
    out.channels = 1;
    out.samples.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        // Source position i * src / dst, split exactly into integer and fractional parts.
        const std::uint64_t num = i * src;
        const std::size_t j = static_cast<std::size_t>(num / dst);
        const double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
        const double a = wave.samples[j];
        const double b = j + 1 < n ? wave.samples[j + 1] : a;
        out.samples[i] = a + (b - a) * frac;
    }
    return out;
}

std::vector<Clip> clip_into_seconds(const PcmWave& wave, const std::string& source_id) {
    if (wave.channels != 1 || wave.sample_rate != kSampleRate) {
        throw Error(ErrorKind::InvalidArgument, "clipping expects mono 16 kHz audio");
    }
    const std::size_t count = wave.samples.size() / kClipLen;
    std::vector<Clip> clips;
    clips.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Clip clip;
        const auto first = wave.samples.begin() + static_cast<std::ptrdiff_t>(i * kClipLen);
        clip.samples.assign(first, first + static_cast<std::ptrdiff_t>(kClipLen));
        clip.source_id = source_id;
        clip.index = i;
        clips.push_back(std::move(clip));
    }
    return clips;
}

PcmWave to_model_rate(const PcmWave& wave) {
    return resample(downmix_mono(wave), kSampleRate);
}

double peak_amplitude(std::span<const double> samples) {
    double peak = 0.0;
    for (double s : samples) peak = std::max(peak, std::abs(s));
    return peak;
}

}  // namespace recme
