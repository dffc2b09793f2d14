#include "ivlab/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ivlab/error.hpp"

namespace ivlab {

namespace {

constexpr std::array<char, 5> kMagic{'I', 'V', 'L', 'B', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t swap_bytes(std::uint64_t v) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
}

}  // namespace

void write_record(std::ostream& out, std::uint32_t n, PayloadKind kind, std::span<const double> values) {
    if (values.size() != static_cast<std::size_t>(n) * n) {
        throw Error(ErrorCode::ShapeMismatch, "record payload does not have n*n entries");
    }
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, n);
    put_u32(out, static_cast<std::uint32_t>(kind));
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        for (double x : values) {
            const auto bits = swap_bytes(std::bit_cast<std::uint64_t>(x));
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

RawRecord read_record(std::istream& in) {
    std::array<char, 5> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw Error(ErrorCode::FormatError, "missing IVLB1 header");
    RawRecord r;
    r.n = get_u32(in);
    const std::uint32_t kind = get_u32(in);
    if (!in || kind < 1 || kind > 4) throw Error(ErrorCode::FormatError, "bad payload kind");
    r.kind = static_cast<PayloadKind>(kind);
    r.values.resize(static_cast<std::size_t>(r.n) * r.n);
    in.read(reinterpret_cast<char*>(r.values.data()),
            static_cast<std::streamsize>(r.values.size() * sizeof(double)));
    if (!in) throw Error(ErrorCode::FormatError, "truncated payload");
    if constexpr (std::endian::native != std::endian::little) {
        for (double& x : r.values) x = std::bit_cast<double>(swap_bytes(std::bit_cast<std::uint64_t>(x)));
    }
    return r;
}

void write_field(const std::filesystem::path& path, const SpectralField& f, PayloadKind kind) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    write_record(out, static_cast<std::uint32_t>(f.grid().n), kind, f.values());
}

SpectralField read_field(const std::filesystem::path& path, double length) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    RawRecord r = read_record(in);
    const int n = static_cast<int>(r.n);
    const TorusGrid g = length == 1.0 ? TorusGrid::unit(n) : TorusGrid::box(n, length);
    return SpectralField(g, std::move(r.values));
}

}  // namespace ivlab
