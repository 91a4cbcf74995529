#pragma once
// Deterministic output helpers. All numeric output goes through to_chars
// shortest round-trip so reruns are byte-identical.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bcrw {

using json = nlohmann::ordered_json;

inline constexpr const char* ARTIFACT_VERSION = "0.1.0";

inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw std::runtime_error("fmt_double failed");
    return std::string(buf, res.ptr);
}

inline std::string fmt_u64(std::uint64_t v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// FNV-1a over a canonical string; used to fingerprint configs in manifests
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) { h ^= c; h *= 0x100000001b3ULL; }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) { s[static_cast<std::size_t>(i)] = digits[v & 0xf]; v >>= 4; }
    return s;
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << body;
    if (!f) throw std::runtime_error("write failed: " + path);
}

// one CSV line; caller supplies already-formatted cells
inline std::string csv_line(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    out += '\n';
    return out;
}

} // namespace bcrw
