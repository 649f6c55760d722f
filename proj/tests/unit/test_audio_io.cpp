#include <doctest.h>

#include <cstring>

#include "oracles.hpp"
#include "recme/audio_io.hpp"
#include "recme/error.hpp"
#include "recme/features.hpp"

using namespace recme;

namespace {

// Hand-assembled RIFF files for encodings encode_wav never writes.
std::vector<std::uint8_t> riff(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                               const std::vector<std::uint8_t>& payload, bool extensible = false) {
    std::vector<std::uint8_t> out;
    auto u16 = [&](std::uint16_t v) {
        out.push_back(v & 0xFF);
        out.push_back(v >> 8);
    };
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
    };
    auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
    const std::uint32_t fmt_size = extensible ? 40 : 16;
    tag("RIFF");
    u32(4 + 8 + fmt_size + 8 + static_cast<std::uint32_t>(payload.size()));
    tag("WAVE");
    tag("fmt ");
    u32(fmt_size);
    u16(extensible ? 0xFFFE : format);
    u16(channels);
    u32(rate);
    const std::uint16_t align = channels * bits / 8;
    u32(rate * align);
    u16(align);
    u16(bits);
    if (extensible) {
        u16(22);
        u16(bits);
        u32(0);
        u16(format);  // sub-format GUID starts with the format tag
        const std::uint8_t rest[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80, 0x00,
                                       0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
        out.insert(out.end(), rest, rest + 14);
    }
    tag("data");
    u32(static_cast<std::uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<std::uint8_t> le16(std::initializer_list<int> values) {
    std::vector<std::uint8_t> out;
    for (int v : values) {
        out.push_back(static_cast<std::uint16_t>(v) & 0xFF);
        out.push_back(static_cast<std::uint16_t>(v) >> 8);
    }
    return out;
}

std::size_t peak_bin(const std::vector<double>& samples) {
    const auto mags = real_fft_magnitudes(samples);
    return static_cast<std::size_t>(std::max_element(mags.begin() + 1, mags.end()) - mags.begin());
}

}  // namespace

TEST_CASE("decode_wav scales 16-bit samples by 1/32768") {
    const auto w = decode_wav(riff(1, 1, 16000, 16, le16({32767, 0, -32768})));
    CHECK(w.sample_rate == 16000);
    CHECK(w.channels == 1);
    REQUIRE(w.samples.size() == 3);
    CHECK(w.samples[0] == doctest::Approx(0.99997).epsilon(1e-5));
    CHECK(w.samples[0] == 32767.0 / 32768.0);
    CHECK(w.samples[1] == 0.0);
    CHECK(w.samples[2] == -1.0);
}

TEST_CASE("decode_wav handles 8, 24 and 32-bit integer and 32-bit float") {
    SUBCASE("8-bit unsigned") {
        const auto w = decode_wav(riff(1, 1, 8000, 8, {128, 255, 0}));
        CHECK(w.samples == std::vector<double>{0.0, 127.0 / 128.0, -1.0});
    }
    SUBCASE("24-bit") {
        const auto w = decode_wav(riff(1, 1, 8000, 24, {0xFF, 0xFF, 0x7F, 0x00, 0x00, 0x80}));
        CHECK(w.samples[0] == 8388607.0 / 8388608.0);
        CHECK(w.samples[1] == -1.0);
    }
    SUBCASE("32-bit") {
        const auto w = decode_wav(riff(1, 1, 8000, 32, {0x00, 0x00, 0x00, 0x40}));
        CHECK(w.samples[0] == 0.5);
    }
    SUBCASE("float") {
        std::vector<std::uint8_t> payload(8);
        const float a = 0.25f, b = -0.75f;
        std::memcpy(payload.data(), &a, 4);
        std::memcpy(payload.data() + 4, &b, 4);
        const auto w = decode_wav(riff(3, 1, 8000, 32, payload));
        CHECK(w.samples == std::vector<double>{0.25, -0.75});
    }
    SUBCASE("extensible wrapper around PCM") {
        const auto w = decode_wav(riff(1, 2, 44100, 16, le16({16384, -16384}), true));
        CHECK(w.channels == 2);
        CHECK(w.sample_rate == 44100);
        CHECK(w.samples == std::vector<double>{0.5, -0.5});
    }
}

TEST_CASE("decode_wav rejects broken or compressed containers") {
    auto kind_of = [](const std::vector<std::uint8_t>& bytes) {
        try {
            decode_wav(bytes);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::InvalidModel;  // "no error"
    };
    CHECK(kind_of({'R', 'I', 'F', 'X'}) == ErrorKind::MalformedContainer);
    auto good = riff(1, 1, 16000, 16, le16({1, 2, 3, 4}));
    auto truncated = good;
    truncated.resize(truncated.size() - 3);
    CHECK(kind_of(truncated) == ErrorKind::MalformedContainer);
    CHECK(kind_of(riff(0x55, 1, 16000, 16, le16({1, 2}))) == ErrorKind::UnsupportedEncoding);  // MP3 tag
    CHECK(kind_of(riff(1, 1, 16000, 12, {0, 0, 0})) == ErrorKind::UnsupportedEncoding);
}

TEST_CASE("encode_wav writes 16-bit PCM with saturation") {
    SUBCASE("single zero sample") {
        const auto bytes = encode_wav(PcmWave{16000, 1, {0.0}});
        REQUIRE(bytes.size() == 46);
        CHECK(std::memcmp(bytes.data() + 36, "data", 4) == 0);
        CHECK(bytes[44] == 0);
        CHECK(bytes[45] == 0);
    }
    SUBCASE("full scale clamps to 32767") {
        const auto bytes = encode_wav(PcmWave{16000, 1, {1.0, -1.0}});
        CHECK((bytes[44] | (bytes[45] << 8)) == 32767);
        CHECK(static_cast<std::int16_t>(bytes[46] | (bytes[47] << 8)) == -32768);
    }
}

TEST_CASE("encode/decode roundtrip stays within one LSB") {
    for (std::size_t n : {1u, 7u, 16000u, 44101u}) {
        PcmWave w{16000, 1, oracle::tone(440.0, 16000, n, 0.9)};
        std::mt19937_64 rng(n);
        std::uniform_real_distribution<double> d(-1.0, 1.0);
        if (n < 100) {
            for (double& v : w.samples) v = d(rng);
        }
        const auto back = decode_wav(encode_wav(w));
        REQUIRE(back.samples.size() == n);
        double worst = 0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(back.samples[i] - w.samples[i]));
        CHECK(worst <= 1.0 / 32768.0);
    }
}

TEST_CASE("file roundtrip through disk") {
    oracle::TempDir dir("wav");
    const PcmWave w{22050, 2, oracle::tone(300, 22050, 200)};
    write_wav_file(dir / "x.wav", w);
    const auto back = read_wav_file(dir / "x.wav");
    CHECK(back.sample_rate == 22050);
    CHECK(back.channels == 2);
    CHECK(back.samples.size() == 200);
    CHECK_THROWS_AS(read_wav_file(dir / "missing.wav"), Error);
}

TEST_CASE("downmix_mono averages channels") {
    const auto m = downmix_mono(PcmWave{16000, 2, {0.5, -0.5, 0.2, 0.4}});
    CHECK(m.channels == 1);
    REQUIRE(m.samples.size() == 2);
    CHECK(m.samples[0] == 0.0);
    CHECK(m.samples[1] == doctest::Approx(0.3).epsilon(1e-15));
    const PcmWave mono{8000, 1, {0.1, 0.2, 0.3}};
    const auto same = downmix_mono(mono);
    CHECK(same.samples == mono.samples);
    CHECK(same.sample_rate == 8000);
}

TEST_CASE("resample length, identity and interpolation") {
    const PcmWave w8{8000, 1, oracle::tone(100, 8000, 8000)};
    const auto up = resample(w8, 16000);
    CHECK(up.sample_rate == 16000);
    CHECK(up.samples.size() == 16000);
    // Even outputs land on input samples; odd ones are midpoints.
    CHECK(up.samples[10] == w8.samples[5]);
    CHECK(up.samples[11] == doctest::Approx((w8.samples[5] + w8.samples[6]) / 2).epsilon(1e-12));

    const auto same = resample(w8, 8000);
    CHECK(same.samples == w8.samples);

    for (int src : {8000, 11025, 22050, 44100, 48000}) {
        const std::size_t n = 12345;
        const auto out = resample(PcmWave{src, 1, std::vector<double>(n, 0.1)}, 16000);
        const double in_seconds = static_cast<double>(n) / src;
        const double out_seconds = static_cast<double>(out.samples.size()) / 16000;
        CHECK(std::abs(out_seconds - in_seconds) < 1.0 / 16000);
        CHECK(out.samples.size() == n * 16000 / static_cast<std::size_t>(src));
    }
}

TEST_CASE("resampled 440 Hz tone keeps its spectral peak") {
    const PcmWave w{44100, 1, oracle::tone(440, 44100, 44100)};
    const auto out = resample(w, 16000);
    REQUIRE(out.samples.size() == 16000);
    CHECK(peak_bin(out.samples) == 440);
    for (double f : {97.0, 1234.0, 3999.0}) {
        const auto r = resample(PcmWave{48000, 1, oracle::tone(f, 48000, 48000)}, 16000);
        CHECK(peak_bin(r.samples) == static_cast<std::size_t>(f));
    }
}

TEST_CASE("clip_into_seconds floors and preserves the prefix") {
    auto wave_of = [](std::size_t n) {
        PcmWave w{16000, 1, std::vector<double>(n)};
        for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<double>(i % 977) / 977.0;
        return w;
    };
    CHECK(clip_into_seconds(wave_of(960000)).size() == 60);
    CHECK(clip_into_seconds(wave_of(968000)).size() == 60);
    CHECK(clip_into_seconds(wave_of(8000)).empty());

    const auto w = wave_of(3 * 16000 + 123);
    const auto clips = clip_into_seconds(w, "rec");
    REQUIRE(clips.size() == 3);
    std::vector<double> joined;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        CHECK(clips[i].samples.size() == kClipLen);
        CHECK(clips[i].index == i);
        CHECK(clips[i].source_id == "rec");
        joined.insert(joined.end(), clips[i].samples.begin(), clips[i].samples.end());
    }
    CHECK(std::equal(joined.begin(), joined.end(), w.samples.begin()));

    CHECK_THROWS_AS(clip_into_seconds(PcmWave{8000, 1, std::vector<double>(8000)}), Error);
}

TEST_CASE("one minute of 44.1 kHz stereo becomes 60 model-rate clips") {
    PcmWave stereo{44100, 2, {}};
    const auto left = oracle::tone(300, 44100, 44100 * 60);
    stereo.samples.reserve(left.size() * 2);
    for (double v : left) {
        stereo.samples.push_back(v);
        stereo.samples.push_back(-0.5 * v);
    }
    const auto clips = clip_into_seconds(to_model_rate(stereo));
    CHECK(clips.size() == 60);
}
