#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "bayer.hpp"
#include "core.hpp"

namespace cfaburst {

/// Fixed 4x4 decorrelation of (R, G1, G2, B) into (Y, U, V, W).
/// Row vectors are the principal directions of RAW quad pixels; the matrix
/// is orthonormal to ~1.3e-5 and its transpose is used as the inverse.
/// The printed entries are kept verbatim, not re-orthonormalized.
inline constexpr std::array<std::array<double, 4>, 4> kYuvwMatrix = {{
    {0.5, 0.5, 0.5, 0.5},
    {-0.5, 0.5, 0.5, -0.5},
    {0.65, 0.2784, -0.2784, -0.65},
    {-0.2784, 0.65, -0.65, 0.2784},
}};

namespace detail {

inline Image apply_quad_matrix(const Image& in, bool transpose)
{
    if (in.channels != 4)
        throw std::invalid_argument("yuvw: expects 4 channels");
    Image out(in.width, in.height, 4, 0.0, in.range_hint);
    const size_t pixels = static_cast<size_t>(in.width) * in.height;
    for (size_t p = 0; p < pixels; ++p) {
        const double* src = &in.data[p * 4];
        double* dst = &out.data[p * 4];
        for (int r = 0; r < 4; ++r) {
            double acc = 0.0;
            for (int c = 0; c < 4; ++c)
                acc += (transpose ? kYuvwMatrix[c][r] : kYuvwMatrix[r][c]) * src[c];
            dst[r] = acc;
        }
    }
    return out;
}

}  // namespace detail

inline QuadImage yuvw_forward(const QuadImage& q)
{
    return QuadImage(detail::apply_quad_matrix(q.img, false));
}

inline QuadImage yuvw_inverse(const QuadImage& q)
{
    return QuadImage(detail::apply_quad_matrix(q.img, true));
}

/// Gray-world white balance: red and blue scaled so their means equal the
/// green mean; green untouched.
inline Image gray_world_wb(const Image& img)
{
    if (img.channels != 3)
        throw std::invalid_argument("gray_world_wb: expects 3 channels");
    const size_t pixels = static_cast<size_t>(img.width) * img.height;
    double mean[3] = {0.0, 0.0, 0.0};
    for (size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < 3; ++c)
            mean[c] += img.data[p * 3 + c];
    for (double& m : mean)
        m /= static_cast<double>(pixels);
    if (mean[0] == 0.0 || mean[2] == 0.0)
        throw std::invalid_argument("gray_world_wb: zero-mean channel");

    const double scale[3] = {mean[1] / mean[0], 1.0, mean[1] / mean[2]};
    Image out = img;
    for (size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < 3; ++c)
            out.data[p * 3 + c] = img.data[p * 3 + c] * scale[c];
    return out;
}

/// Power-law tone mapping on the [0, range_hint] interval. Negative samples
/// clamp to 0; endpoints are fixed points.
inline Image gamma_correct(const Image& img, double gamma)
{
    if (gamma <= 0.0)
        throw std::invalid_argument("gamma_correct: gamma must be positive");
    Image out = img;
    const double range = img.range_hint;
    for (double& v : out.data)
        v = range * std::pow(std::max(v, 0.0) / range, gamma);
    return out;
}

}  // namespace cfaburst
