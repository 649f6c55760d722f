#include "recme/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "recme/error.hpp"

namespace recme {
namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'R', 'S', 'I', 'D'};
constexpr std::size_t kPrefixLen = 4 + 2 + 4;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

json header_for(const ModelState& state) {
    json spec = {
        {"input_len", state.spec.input_len},
        {"block_filters", state.spec.block_filters},
        {"dense_sizes", state.spec.dense_sizes},
        {"dropout_rate", state.spec.dropout_rate},
        {"num_classes", state.spec.num_classes},
        {"input_scale", state.spec.input_scale},
    };
    json manifest = json::array();
    std::size_t offset = 0;
    for (const auto& p : state.params) {
        manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
        offset += p.value.size() * sizeof(double);
    }
    return {{"spec", spec}, {"params", manifest}, {"registry", state.registry}};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state) {
    check_model(state);
    const std::string header = header_for(state).dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le(out, kCheckpointVersion, 2);
    put_le(out, header.size(), 4);
    out.insert(out.end(), header.begin(), header.end());
    out.reserve(out.size() + param_count(state.params) * 8 + 4);
    for (const auto& p : state.params) {
        for (double v : p.value.values()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
    put_le(out, crc_of(out), 4);
    return out;
}

ModelState parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorKind::BadMagic, "not a checkpoint file");
    }
    if (bytes.size() < kPrefixLen + 4) throw Error(ErrorKind::ChecksumMismatch, "checkpoint truncated");
    const auto version = static_cast<std::uint16_t>(get_le(bytes.data() + 4, 2));
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version));
    }
    const auto body = bytes.first(bytes.size() - 4);
    const auto stored_crc = static_cast<std::uint32_t>(get_le(bytes.data() + body.size(), 4));
    if (crc_of(body) != stored_crc) throw Error(ErrorKind::ChecksumMismatch, "checkpoint CRC mismatch");

    const std::size_t header_len = get_le(bytes.data() + 6, 4);
    if (header_len > body.size() - kPrefixLen) throw Error(ErrorKind::InvalidModel, "header overruns file");
    const char* header_begin = reinterpret_cast<const char*>(bytes.data() + kPrefixLen);
    ModelState state;
    std::size_t data_begin = kPrefixLen + header_len;
    try {
        const json header = json::parse(header_begin, header_begin + header_len);
        const json& s = header.at("spec");
        state.spec.input_len = s.at("input_len").get<std::size_t>();
        state.spec.block_filters = s.at("block_filters").get<std::vector<std::size_t>>();
        state.spec.dense_sizes = s.at("dense_sizes").get<std::vector<std::size_t>>();
        state.spec.dropout_rate = s.at("dropout_rate").get<double>();
        state.spec.num_classes = s.at("num_classes").get<std::size_t>();
        state.spec.input_scale = s.at("input_scale").get<double>();
        state.registry = header.at("registry").get<std::vector<std::string>>();
        for (const json& entry : header.at("params")) {
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = shape_volume(shape);
            if (data_begin + offset + count * 8 > body.size()) {
                throw Error(ErrorKind::InvalidModel, "parameter data overruns file");
            }
            std::vector<double> values(count);
            const std::uint8_t* src = bytes.data() + data_begin + offset;
            for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(get_le(src + 8 * i, 8));
            state.params.push_back({entry.at("name").get<std::string>(), Tensor(shape, std::move(values))});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidModel, std::string("bad checkpoint header: ") + e.what());
    }
    check_model(state);
    return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(state);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot move checkpoint into place: " + ec.message());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

}  // namespace recme
