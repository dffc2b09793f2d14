#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "ivlab/spectral.hpp"

namespace ivlab {

/// Payload tags of the binary container.
enum class PayloadKind : std::uint32_t {
    Scalar = 1,
    VelocityComponent = 2,
    Kernel = 3,
    Positions = 4,
};

/// One record: "IVLB1", n (u32 LE), kind (u32 LE), n*n f64 LE row-major.
struct RawRecord {
    std::uint32_t n = 0;
    PayloadKind kind = PayloadKind::Scalar;
    std::vector<double> values;
};

void write_record(std::ostream& out, std::uint32_t n, PayloadKind kind, std::span<const double> values);
RawRecord read_record(std::istream& in);

void write_field(const std::filesystem::path& path, const SpectralField& f,
                 PayloadKind kind = PayloadKind::Scalar);
/// The container does not store the box length; the caller supplies it.
SpectralField read_field(const std::filesystem::path& path, double length = 1.0);

}  // namespace ivlab
