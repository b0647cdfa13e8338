#pragma once

// Minimal raster plotting for the noise-curve figure: scatter of the
// per-bin observations plus the fitted piecewise-linear model, rendered to
// an 8-bit RGB image. Output as PPM, or PNG when zlib is available at build
// time (CFABURST_WITH_PNG).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "netpbm.hpp"
#include "noise.hpp"

#ifdef CFABURST_WITH_PNG
#include <zlib.h>
#endif

namespace cfaburst {

namespace detail {

struct Canvas {
    Image img;

    Canvas(int w, int h) : img(w, h, 3, 255.0, 255.0) {}

    void put(int x, int y, int r, int g, int b)
    {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height)
            return;
        img.at(x, y, 0) = r;
        img.at(x, y, 1) = g;
        img.at(x, y, 2) = b;
    }

    void square(int cx, int cy, int half, int r, int g, int b)
    {
        for (int j = -half; j <= half; ++j)
            for (int i = -half; i <= half; ++i)
                put(cx + i, cy + j, r, g, b);
    }

    void line(double x0, double y0, double x1, double y1, int r, int g, int b)
    {
        const double dx = x1 - x0, dy = y1 - y0;
        const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(dx),
                                                                          std::abs(dy)))));
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            put(static_cast<int>(std::lround(x0 + t * dx)),
                static_cast<int>(std::lround(y0 + t * dy)), r, g, b);
        }
    }
};

inline const int kChannelColors[4][3] = {
    {200, 40, 40}, {40, 150, 40}, {40, 110, 40}, {40, 60, 200}};

}  // namespace detail

/// Scatter of sigma(x) observations per channel, with the fitted model
/// overlaid when given. Axes with ticks, one color per channel.
inline Image plot_noise_curve(const std::vector<std::vector<NoiseObservation>>& obs,
                              const NoiseModel* model = nullptr, int width = 800,
                              int height = 600)
{
    double xmax = 1.0, ymax = 1e-6;
    for (const auto& ch : obs)
        for (const auto& o : ch) {
            xmax = std::max(xmax, o.x);
            ymax = std::max(ymax, o.sigma);
        }
    if (model)
        for (const auto& m : model->channels)
            xmax = std::max(xmax, m.max_x);
    ymax *= 1.15;
    xmax *= 1.05;

    const int ml = 60, mr = 15, mt = 15, mb = 45;  // margins
    detail::Canvas cv(width, height);
    const int pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + x / xmax * pw; };
    auto py = [&](double y) { return mt + ph - y / ymax * ph; };

    // axes and ticks
    cv.line(ml, mt, ml, mt + ph, 0, 0, 0);
    cv.line(ml, mt + ph, ml + pw, mt + ph, 0, 0, 0);
    for (int t = 0; t <= 8; ++t) {
        const double x = xmax * t / 8.0;
        cv.line(px(x), mt + ph, px(x), mt + ph + 5, 0, 0, 0);
        const double y = ymax * t / 8.0;
        cv.line(ml - 5, py(y), ml, py(y), 0, 0, 0);
    }

    if (model) {
        for (size_t ch = 0; ch < model->channels.size(); ++ch) {
            const auto& m = model->channels[ch];
            const auto* col = detail::kChannelColors[ch % 4];
            double prev_x = m.min_x, prev_y = m.eval(m.min_x);
            const int segs = 128;
            for (int s = 1; s <= segs; ++s) {
                const double x = m.min_x + (m.max_x - m.min_x) * s / segs;
                const double y = m.eval(x);
                cv.line(px(prev_x), py(prev_y), px(x), py(y), col[0], col[1], col[2]);
                prev_x = x;
                prev_y = y;
            }
        }
    }
    for (size_t ch = 0; ch < obs.size(); ++ch) {
        const auto* col = detail::kChannelColors[ch % 4];
        for (const auto& o : obs[ch])
            cv.square(static_cast<int>(std::lround(px(o.x))),
                      static_cast<int>(std::lround(py(o.sigma))), 2, col[0], col[1], col[2]);
    }
    return cv.img;
}

#ifdef CFABURST_WITH_PNG
/// 8-bit RGB PNG, single IDAT, no interlace.
inline void write_png(const std::string& path, const Image& img)
{
    if (img.channels != 3)
        throw std::invalid_argument("write_png: expects 3 channels");
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + img.width * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                raw.push_back(static_cast<uint8_t>(
                    std::clamp(std::lround(img.at(x, y, c)), 0l, 255l)));
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> zdata(zlen);
    if (compress2(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    zdata.resize(zlen);

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("write_png: cannot write " + path);
    auto be32 = [](uint32_t v, uint8_t* p) {
        p[0] = v >> 24;
        p[1] = v >> 16;
        p[2] = v >> 8;
        p[3] = v;
    };
    auto chunk = [&](const char* tag, const uint8_t* data, size_t len) {
        uint8_t hdr[8];
        be32(static_cast<uint32_t>(len), hdr);
        std::copy_n(tag, 4, reinterpret_cast<char*>(hdr + 4));
        out.write(reinterpret_cast<char*>(hdr), 8);
        if (len)
            out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
        uLong crc = crc32(0, hdr + 4, 4);
        if (len)
            crc = crc32(crc, data, static_cast<uInt>(len));
        uint8_t tail[4];
        be32(static_cast<uint32_t>(crc), tail);
        out.write(reinterpret_cast<char*>(tail), 4);
    };

    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);
    uint8_t ihdr[13];
    be32(static_cast<uint32_t>(img.width), ihdr);
    be32(static_cast<uint32_t>(img.height), ihdr + 4);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // truecolor
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    chunk("IHDR", ihdr, 13);
    chunk("IDAT", zdata.data(), zdata.size());
    chunk("IEND", nullptr, 0);
}
#endif

/// Dispatches on extension: .png when built with zlib, otherwise PPM.
inline void write_plot(const std::string& path, const Image& img)
{
#ifdef CFABURST_WITH_PNG
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
        write_png(path, img);
        return;
    }
#endif
    write_image(path, img, 8);
}

}  // namespace cfaburst
