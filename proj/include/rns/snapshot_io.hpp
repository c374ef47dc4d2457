#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "rns/field.hpp"

/// Binary snapshot format:
///   bytes 0..3   "RNS1"
///   u32          n_per_axis
///   f64          box_length
///   u8           representation (0 = physical, 1 = spectral)
///   payload      3 component lattices, little-endian f64, x-fastest.
/// Spectral payloads store (re, im) pairs over the half lattice
/// (n/2+1) x n x n, kx fastest.
namespace rns::snapshot {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

inline constexpr char magic[4] = {'R', 'N', 'S', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("snapshot: truncated header");
    return v;
}

inline void write(std::ostream& os, const VectorField& u) {
    const GridSpec& g = u.grid();
    os.write(magic, 4);
    write_pod(os, std::uint32_t(g.n));
    write_pod(os, g.box_length);
    write_pod(os, std::uint8_t(u.representation()));
    for (int c = 0; c < 3; ++c) {
        if (u.is_physical()) {
            auto v = u[c].values();
            os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
        } else {
            auto v = u[c].coeffs();
            os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(Complex)));
        }
    }
    if (!os) throw IoError("snapshot: write failed");
}

inline VectorField read(std::istream& is) {
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0) throw IoError("snapshot: bad magic");
    GridSpec g;
    g.n = int(read_pod<std::uint32_t>(is));
    g.box_length = read_pod<double>(is);
    const auto flag = read_pod<std::uint8_t>(is);
    if (flag > 1) throw IoError("snapshot: bad representation flag");
    try {
        g.validate();
    } catch (const ConfigError& e) {
        throw IoError(std::string("snapshot: ") + e.what());
    }
    const auto rep = Representation(flag);
    VectorField u = VectorField::zeros(g, rep);
    for (int c = 0; c < 3; ++c) {
        if (rep == Representation::physical) {
            auto v = u[c].values();
            is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
        } else {
            auto v = u[c].coeffs();
            is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(Complex)));
        }
        if (!is) throw IoError("snapshot: truncated payload");
    }
    return u;
}

inline void write_file(const std::string& path, const VectorField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("snapshot: cannot open " + path);
    write(os, u);
}

inline VectorField read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("snapshot: cannot open " + path);
    return read(is);
}

}  // namespace rns::snapshot
