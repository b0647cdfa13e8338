#pragma once

// Binary PGM (P5) and PPM (P6) at maxval 255 or 65535. 16-bit samples are
// big-endian per the netpbm format spec, so integer-valued data in range
// round-trips bit exactly.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "core.hpp"

namespace cfaburst {

namespace detail {

inline int pnm_token(std::istream& in)
{
    // whitespace and '#' comments between header fields
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            in.unget();
            break;
        }
    }
    int value;
    if (!(in >> value))
        throw std::runtime_error("netpbm: truncated header");
    return value;
}

}  // namespace detail

inline Image read_image(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("netpbm: cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    int channels;
    if (magic[0] == 'P' && magic[1] == '5')
        channels = 1;
    else if (magic[0] == 'P' && magic[1] == '6')
        channels = 3;
    else
        throw std::runtime_error("netpbm: unsupported magic in " + path);

    const int w = detail::pnm_token(in);
    const int h = detail::pnm_token(in);
    const int maxval = detail::pnm_token(in);
    if (w <= 0 || h <= 0 || (maxval != 255 && maxval != 65535))
        throw std::runtime_error("netpbm: bad header in " + path);
    in.get();  // single whitespace before raster

    Image img(w, h, channels, 0.0, static_cast<double>(maxval));
    const size_t n = img.size();
    if (maxval == 255) {
        std::vector<uint8_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (!in)
            throw std::runtime_error("netpbm: truncated raster in " + path);
        for (size_t i = 0; i < n; ++i)
            img.data[i] = buf[i];
    } else {
        std::vector<uint8_t> buf(2 * n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
        if (!in)
            throw std::runtime_error("netpbm: truncated raster in " + path);
        for (size_t i = 0; i < n; ++i)
            img.data[i] = 256.0 * buf[2 * i] + buf[2 * i + 1];
    }
    return img;
}

/// Writes P5 (1 channel) or P6 (3 channels) at the requested bit depth.
/// Samples are rounded to nearest integer; out-of-range samples are an
/// error, not silently clipped.
inline void write_image(const std::string& path, const Image& img, int bitdepth = 8)
{
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("netpbm: only 1- or 3-channel images");
    if (bitdepth != 8 && bitdepth != 16)
        throw std::invalid_argument("netpbm: bit depth must be 8 or 16");
    const int maxval = bitdepth == 8 ? 255 : 65535;

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("netpbm: cannot write " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n"
        << maxval << "\n";

    const size_t n = img.size();
    std::vector<uint8_t> buf(bitdepth == 8 ? n : 2 * n);
    for (size_t i = 0; i < n; ++i) {
        const double v = std::round(img.data[i]);
        if (!(v >= 0.0 && v <= maxval))
            throw std::runtime_error("netpbm: sample out of range for " +
                                     std::to_string(bitdepth) + "-bit write");
        const auto q = static_cast<uint32_t>(v);
        if (bitdepth == 8) {
            buf[i] = static_cast<uint8_t>(q);
        } else {
            buf[2 * i] = static_cast<uint8_t>(q >> 8);
            buf[2 * i + 1] = static_cast<uint8_t>(q & 0xff);
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw std::runtime_error("netpbm: write failed for " + path);
}

/// {0,1} masks serialize as 8-bit PGM with values {0,255}.
inline void write_mask(const std::string& path, const Image& mask)
{
    Image scaled = mask;
    for (double& v : scaled.data)
        v = v > 0.5 ? 255.0 : 0.0;
    write_image(path, scaled, 8);
}

inline Image read_mask(const std::string& path)
{
    Image m = read_image(path);
    for (double& v : m.data)
        v = v > 127.0 ? 1.0 : 0.0;
    m.range_hint = 1.0;
    return m;
}

inline Image clamp_to_range(const Image& img, double maxval)
{
    Image out = img;
    for (double& v : out.data)
        v = std::clamp(v, 0.0, maxval);
    return out;
}

}  // namespace cfaburst
