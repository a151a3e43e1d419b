#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace weakseg {

/// File-level error with a machine-checkable kind.
class io_error : public std::runtime_error {
public:
    enum class Kind { open, format, truncated, dimension };

    io_error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

namespace binio {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_f32le(std::ostream& os, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, 4);
    write_u32le(os, bits);
}

inline bool read_u32le(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

inline bool read_f32le(std::istream& is, float& v) {
    std::uint32_t bits;
    if (!read_u32le(is, bits)) return false;
    __builtin_memcpy(&v, &bits, 4);
    return true;
}

}  // namespace binio
}  // namespace weakseg
