#include <openssl/evp.h>

#include <algorithm>
#include <cctype>

#include "recme/error.hpp"
#include "recme/service.hpp"

namespace recme {

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::string_view view = text;
    // Browsers hand out data URLs; take everything after the comma.
    if (view.starts_with("data:")) {
        const auto comma = view.find(',');
        if (comma == std::string_view::npos) throw Error(ErrorKind::InvalidArgument, "data URL without payload");
        view.remove_prefix(comma + 1);
    }
    std::string clean;
    clean.reserve(view.size());
    for (char c : view) {
        if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
    }
    if (clean.empty()) return {};
    if (clean.size() % 4 != 0) throw Error(ErrorKind::InvalidArgument, "base64 length is not a multiple of 4");

    std::vector<std::uint8_t> out(clean.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                  static_cast<int>(clean.size()));
    if (n < 0) throw Error(ErrorKind::InvalidArgument, "malformed base64");
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    const auto pad = static_cast<std::size_t>(std::count(clean.end() - 2, clean.end(), '='));
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

}  // namespace recme
