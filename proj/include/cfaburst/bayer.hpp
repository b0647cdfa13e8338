#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "core.hpp"

namespace cfaburst {

enum class BayerPattern { RGGB, GRBG, GBRG, BGGR };

inline BayerPattern parse_pattern(const std::string& s)
{
    if (s == "RGGB") return BayerPattern::RGGB;
    if (s == "GRBG") return BayerPattern::GRBG;
    if (s == "GBRG") return BayerPattern::GBRG;
    if (s == "BGGR") return BayerPattern::BGGR;
    throw std::invalid_argument("unknown Bayer pattern: " + s);
}

inline const char* pattern_name(BayerPattern p)
{
    switch (p) {
        case BayerPattern::RGGB: return "RGGB";
        case BayerPattern::GRBG: return "GRBG";
        case BayerPattern::GBRG: return "GBRG";
        case BayerPattern::BGGR: return "BGGR";
    }
    return "?";
}

/// Color (0=R, 1=G, 2=B) measured at CFA site (x, y).
inline int bayer_color(BayerPattern p, int x, int y)
{
    static constexpr int cell[4][4] = {
        // (0,0) (1,0) (0,1) (1,1), row-major 2x2 unit cell
        {0, 1, 1, 2},  // RGGB
        {1, 0, 2, 1},  // GRBG
        {1, 2, 0, 1},  // GBRG
        {2, 1, 1, 0},  // BGGR
    };
    return cell[static_cast<int>(p)][(y & 1) * 2 + (x & 1)];
}

/// Quad channel (0=R, 1=G1, 2=G2, 3=B) at cell offset (dx, dy).
/// G1 is the green sharing a row with red, G2 the green sharing a row with
/// blue, for every pattern.
inline int quad_channel(BayerPattern p, int dx, int dy)
{
    static constexpr int cell[4][4] = {
        {0, 1, 2, 3},  // RGGB
        {1, 0, 3, 2},  // GRBG
        {2, 3, 0, 1},  // GBRG
        {3, 2, 1, 0},  // BGGR
    };
    return cell[static_cast<int>(p)][(dy & 1) * 2 + (dx & 1)];
}

/// Single-channel mosaicked frame plus its pattern. Even dimensions only.
struct CfaImage {
    Image img;
    BayerPattern pattern = BayerPattern::RGGB;

    CfaImage() = default;

    CfaImage(Image im, BayerPattern p) : img(std::move(im)), pattern(p)
    {
        if (img.channels != 1)
            throw std::invalid_argument("CfaImage: expects a single channel");
        if (img.width % 2 != 0 || img.height % 2 != 0)
            throw std::invalid_argument("CfaImage: odd dimensions");
    }
};

/// Half-resolution 4-channel repacking, channels ordered (R, G1, G2, B).
struct QuadImage {
    Image img;

    QuadImage() = default;

    explicit QuadImage(Image im) : img(std::move(im))
    {
        if (img.channels != 4)
            throw std::invalid_argument("QuadImage: expects 4 channels");
    }
};

inline CfaImage mosaic(const Image& color, BayerPattern p)
{
    if (color.channels != 3)
        throw std::invalid_argument("mosaic: expects a 3-channel image");
    if (color.width % 2 != 0 || color.height % 2 != 0)
        throw std::invalid_argument("mosaic: odd dimensions");
    Image out(color.width, color.height, 1, 0.0, color.range_hint);
    for (int y = 0; y < color.height; ++y)
        for (int x = 0; x < color.width; ++x)
            out.at(x, y) = color.at(x, y, bayer_color(p, x, y));
    return CfaImage(std::move(out), p);
}

inline QuadImage cfa_to_quad(const CfaImage& cfa)
{
    const int w = cfa.img.width / 2;
    const int h = cfa.img.height / 2;
    Image out(w, h, 4, 0.0, cfa.img.range_hint);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    out.at(x, y, quad_channel(cfa.pattern, dx, dy)) =
                        cfa.img.at(2 * x + dx, 2 * y + dy);
    return QuadImage(std::move(out));
}

inline CfaImage quad_to_cfa(const QuadImage& quad, BayerPattern p)
{
    const int w = quad.img.width * 2;
    const int h = quad.img.height * 2;
    Image out(w, h, 1, 0.0, quad.img.range_hint);
    for (int y = 0; y < quad.img.height; ++y)
        for (int x = 0; x < quad.img.width; ++x)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    out.at(2 * x + dx, 2 * y + dy) =
                        quad.img.at(x, y, quad_channel(p, dx, dy));
    return CfaImage(std::move(out), p);
}

/// Binary full-resolution mask of original CFA sample positions for one
/// color channel (0=R, 1=G, 2=B). Green masks are the quincunx.
inline Image channel_mask(BayerPattern p, int color, int w, int h)
{
    if (color < 0 || color > 2)
        throw std::invalid_argument("channel_mask: color must be 0, 1 or 2");
    if (w % 2 != 0 || h % 2 != 0)
        throw std::invalid_argument("channel_mask: odd dimensions");
    Image mask(w, h, 1, 0.0, 1.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            mask.at(x, y) = bayer_color(p, x, y) == color ? 1.0 : 0.0;
    return mask;
}

}  // namespace cfaburst
