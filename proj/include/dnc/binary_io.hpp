#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>

namespace dnc {

// Little-endian helpers shared by the dataset blob and the model payload.

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

inline std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4] = {};
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32_le(std::ostream& out, std::span<const float> values) {
    for (float v : values) write_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

/// Returns false when the stream ends before values is filled.
inline bool read_f32_le(std::istream& in, std::span<float> values) {
    for (float& v : values) {
        const std::uint32_t bits = read_u32_le(in);
        if (!in) return false;
        v = std::bit_cast<float>(bits);
    }
    return true;
}

}  // namespace dnc
