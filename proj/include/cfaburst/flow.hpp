#pragma once

// Duality-based TV-L1 optical flow on a coarse-to-fine pyramid, backward
// bicubic warping, divergence/color-difference occlusion detection, and the
// Middlebury .flo serialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace cfaburst {

struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> u, v;  // per-pixel displacement in pixels

    FlowField() = default;

    FlowField(int w, int h)
        : width(w), height(h),
          u(static_cast<size_t>(w) * h, 0.0),
          v(static_cast<size_t>(w) * h, 0.0)
    {
    }
};

struct OcclusionMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> occluded;  // 1 = unreliable

    OcclusionMask() = default;

    OcclusionMask(int w, int h) : width(w), height(h), occluded(static_cast<size_t>(w) * h, 0) {}

    bool at(int x, int y) const { return occluded[static_cast<size_t>(y) * width + x] != 0; }
    bool any() const
    {
        for (uint8_t o : occluded)
            if (o) return true;
        return false;
    }
};

struct FlowParams {
    double lambda = 0.15;      // data-term weight
    double theta = 0.3;        // quadratic coupling
    int warps = 5;             // warpings per scale
    int pyramid_scales = 5;    // requested pyramid depth
    double scale_factor = 0.5; // downscaling per level, in (0,1)
    int inner_iterations = 50; // fixed-point iterations per warp
};

namespace detail {

constexpr double kTimeStep = 0.25;
constexpr double kStopEpsilon = 0.01;        // convergence on mean squared update
constexpr double kPresmoothSigma = 0.8;
constexpr double kZoomSigmaZero = 0.6;
constexpr double kGradEps = 1e-10;
constexpr int kMinCoarseSize = 16;

inline size_t ix(int x, int y, int w) { return static_cast<size_t>(y) * w + x; }

inline void centered_gradient(const std::vector<double>& in, std::vector<double>& dx,
                              std::vector<double>& dy, int w, int h)
{
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            dx[ix(x, y, w)] = 0.5 * (in[ix(xp, y, w)] - in[ix(xm, y, w)]);
            dy[ix(x, y, w)] = 0.5 * (in[ix(x, yp, w)] - in[ix(x, ym, w)]);
        }
}

// forward differences, zero on the last row/column
inline void forward_gradient(const std::vector<double>& in, std::vector<double>& dx,
                             std::vector<double>& dy, int w, int h)
{
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            dx[ix(x, y, w)] = x < w - 1 ? in[ix(x + 1, y, w)] - in[ix(x, y, w)] : 0.0;
            dy[ix(x, y, w)] = y < h - 1 ? in[ix(x, y + 1, w)] - in[ix(x, y, w)] : 0.0;
        }
}

// adjoint of the forward gradient (backward differences)
inline void dual_divergence(const std::vector<double>& p1, const std::vector<double>& p2,
                            std::vector<double>& div, int w, int h)
{
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double ddx = x == 0 ? p1[ix(0, y, w)]
                               : x == w - 1 ? -p1[ix(w - 2, y, w)]
                                            : p1[ix(x, y, w)] - p1[ix(x - 1, y, w)];
            const double ddy = y == 0 ? p2[ix(x, 0, w)]
                               : y == h - 1 ? -p2[ix(x, h - 2, w)]
                                            : p2[ix(x, y, w)] - p2[ix(x, y - 1, w)];
            div[ix(x, y, w)] = ddx + ddy;
        }
}

inline double cubic_cell(const double v[4], double t)
{
    return v[1] + 0.5 * t * (v[2] - v[0] +
            t * (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3] +
            t * (3.0 * (v[1] - v[2]) + v[3] - v[0])));
}

inline double bicubic_at(const std::vector<double>& img, int w, int h, double x, double y)
{
    const int sx = static_cast<int>(std::floor(x));
    const int sy = static_cast<int>(std::floor(y));
    double rows[4];
    for (int j = -1; j <= 2; ++j) {
        const int yy = std::clamp(sy + j, 0, h - 1);
        double cell[4];
        for (int i = -1; i <= 2; ++i) {
            const int xx = std::clamp(sx + i, 0, w - 1);
            cell[i + 1] = img[ix(xx, yy, w)];
        }
        rows[j + 1] = cubic_cell(cell, x - sx);
    }
    return cubic_cell(rows, y - sy);
}

inline void bicubic_warp(const std::vector<double>& in, const std::vector<double>& u,
                         const std::vector<double>& v, std::vector<double>& out, int w, int h)
{
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[ix(x, y, w)] = bicubic_at(in, w, h, x + u[ix(x, y, w)], y + v[ix(x, y, w)]);
}

inline void gaussian_smooth(std::vector<double>& img, int w, int h, double sigma)
{
    if (sigma <= 0.0)
        return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel)
        k /= norm;

    std::vector<double> tmp(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * img[ix(std::clamp(x + i, 0, w - 1), y, w)];
            tmp[ix(x, y, w)] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[ix(x, std::clamp(y + i, 0, h - 1), w)];
            img[ix(x, y, w)] = acc;
        }
}

inline void zoom_size(int w, int h, double factor, int& ow, int& oh)
{
    ow = std::max(1, static_cast<int>(std::lround(w * factor)));
    oh = std::max(1, static_cast<int>(std::lround(h * factor)));
}

inline void zoom_out(const std::vector<double>& in, std::vector<double>& out, int w, int h,
                     int ow, int oh, double factor)
{
    std::vector<double> smoothed = in;
    const double sigma = kZoomSigmaZero * std::sqrt(1.0 / (factor * factor) - 1.0);
    gaussian_smooth(smoothed, w, h, sigma);
    out.resize(static_cast<size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[ix(x, y, ow)] = bicubic_at(smoothed, w, h, x / factor, y / factor);
}

inline void zoom_in(const std::vector<double>& in, std::vector<double>& out, int w, int h,
                    int ow, int oh)
{
    out.resize(static_cast<size_t>(ow) * oh);
    const double fx = static_cast<double>(w) / ow;
    const double fy = static_cast<double>(h) / oh;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[ix(x, y, ow)] = bicubic_at(in, w, h, x * fx, y * fy);
}

// One pyramid level of the Zach-Pock-Bischof alternation.
inline void tvl1_single_scale(const std::vector<double>& i0, const std::vector<double>& i1,
                              std::vector<double>& u, std::vector<double>& v, int w, int h,
                              const FlowParams& p)
{
    const size_t n = static_cast<size_t>(w) * h;
    const double lt = p.lambda * p.theta;
    std::vector<double> i1x(n), i1y(n), i1w(n), i1wx(n), i1wy(n);
    std::vector<double> rho_c(n), grad2(n), v1(n), v2(n);
    std::vector<double> p11(n, 0.0), p12(n, 0.0), p21(n, 0.0), p22(n, 0.0);
    std::vector<double> div_p1(n), div_p2(n), ux(n), uy(n), vx(n), vy(n);

    centered_gradient(i1, i1x, i1y, w, h);

    for (int warp = 0; warp < p.warps; ++warp) {
        bicubic_warp(i1, u, v, i1w, w, h);
        bicubic_warp(i1x, u, v, i1wx, w, h);
        bicubic_warp(i1y, u, v, i1wy, w, h);

        for (size_t i = 0; i < n; ++i) {
            grad2[i] = i1wx[i] * i1wx[i] + i1wy[i] * i1wy[i];
            rho_c[i] = i1w[i] - i1wx[i] * u[i] - i1wy[i] * v[i] - i0[i];
        }

        for (int it = 0; it < p.inner_iterations; ++it) {
            // data-term proximal step (pointwise thresholding)
            for (size_t i = 0; i < n; ++i) {
                const double rho = rho_c[i] + i1wx[i] * u[i] + i1wy[i] * v[i];
                double d1, d2;
                if (rho < -lt * grad2[i]) {
                    d1 = lt * i1wx[i];
                    d2 = lt * i1wy[i];
                } else if (rho > lt * grad2[i]) {
                    d1 = -lt * i1wx[i];
                    d2 = -lt * i1wy[i];
                } else if (grad2[i] < kGradEps) {
                    d1 = d2 = 0.0;
                } else {
                    const double fi = -rho / grad2[i];
                    d1 = fi * i1wx[i];
                    d2 = fi * i1wy[i];
                }
                v1[i] = u[i] + d1;
                v2[i] = v[i] + d2;
            }

            dual_divergence(p11, p12, div_p1, w, h);
            dual_divergence(p21, p22, div_p2, w, h);

            double error = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const double pu = u[i], pv = v[i];
                u[i] = v1[i] + p.theta * div_p1[i];
                v[i] = v2[i] + p.theta * div_p2[i];
                error += (u[i] - pu) * (u[i] - pu) + (v[i] - pv) * (v[i] - pv);
            }
            error /= static_cast<double>(n);

            forward_gradient(u, ux, uy, w, h);
            forward_gradient(v, vx, vy, w, h);

            const double taut = kTimeStep / p.theta;
            for (size_t i = 0; i < n; ++i) {
                const double g1 = std::hypot(ux[i], uy[i]);
                const double g2 = std::hypot(vx[i], vy[i]);
                const double ng1 = 1.0 + taut * g1;
                const double ng2 = 1.0 + taut * g2;
                p11[i] = (p11[i] + taut * ux[i]) / ng1;
                p12[i] = (p12[i] + taut * uy[i]) / ng1;
                p21[i] = (p21[i] + taut * vx[i]) / ng2;
                p22[i] = (p22[i] + taut * vy[i]) / ng2;
            }

            if (error < kStopEpsilon * kStopEpsilon)
                break;
        }
    }
}

}  // namespace detail

/// Dense flow from src to dst: dst(x + flow(x)) ~ src(x). Pyramid depth is
/// reduced automatically when the images are too small for the requested
/// number of scales.
inline FlowField tvl1_flow(const Image& src, const Image& dst, const FlowParams& p = {})
{
    if (!src.same_shape(dst))
        throw std::invalid_argument("tvl1_flow: shape mismatch");
    if (src.channels != 1)
        throw std::invalid_argument("tvl1_flow: expects single-channel images");
    if (p.scale_factor <= 0.0 || p.scale_factor >= 1.0)
        throw std::invalid_argument("tvl1_flow: scale_factor must be in (0,1)");

    const int w = src.width, h = src.height;
    int scales = std::max(1, p.pyramid_scales);
    {
        const int min_dim = std::min(w, h);
        int allowed = 1;
        double size = min_dim;
        while (allowed < scales && size * p.scale_factor >= detail::kMinCoarseSize) {
            size *= p.scale_factor;
            ++allowed;
        }
        scales = allowed;
    }

    // joint normalization to a 255 scale keeps lambda image-independent.
    // The denominator never shrinks below the nominal range: stretching a
    // low-contrast frame (e.g. a flat noisy one) to full range would turn
    // its noise into full-contrast texture for the data term to match.
    std::vector<std::vector<double>> i0(scales), i1(scales), us(scales), vs(scales);
    std::vector<int> ws(scales), hs(scales);
    ws[0] = w;
    hs[0] = h;
    i0[0].assign(src.data.begin(), src.data.end());
    i1[0].assign(dst.data.begin(), dst.data.end());
    double lo = i0[0][0], hi = i0[0][0];
    for (double x : i0[0]) { lo = std::min(lo, x); hi = std::max(hi, x); }
    for (double x : i1[0]) { lo = std::min(lo, x); hi = std::max(hi, x); }
    const double den = std::max(hi - lo, std::max(src.range_hint, dst.range_hint));
    if (den > 0.0) {
        for (double& x : i0[0]) x = 255.0 * (x - lo) / den;
        for (double& x : i1[0]) x = 255.0 * (x - lo) / den;
    }
    detail::gaussian_smooth(i0[0], w, h, detail::kPresmoothSigma);
    detail::gaussian_smooth(i1[0], w, h, detail::kPresmoothSigma);

    for (int s = 1; s < scales; ++s) {
        detail::zoom_size(ws[s - 1], hs[s - 1], p.scale_factor, ws[s], hs[s]);
        detail::zoom_out(i0[s - 1], i0[s], ws[s - 1], hs[s - 1], ws[s], hs[s], p.scale_factor);
        detail::zoom_out(i1[s - 1], i1[s], ws[s - 1], hs[s - 1], ws[s], hs[s], p.scale_factor);
    }
    us[scales - 1].assign(static_cast<size_t>(ws[scales - 1]) * hs[scales - 1], 0.0);
    vs[scales - 1].assign(static_cast<size_t>(ws[scales - 1]) * hs[scales - 1], 0.0);

    for (int s = scales - 1; s >= 0; --s) {
        detail::tvl1_single_scale(i0[s], i1[s], us[s], vs[s], ws[s], hs[s], p);
        if (s == 0)
            break;
        detail::zoom_in(us[s], us[s - 1], ws[s], hs[s], ws[s - 1], hs[s - 1]);
        detail::zoom_in(vs[s], vs[s - 1], ws[s], hs[s], ws[s - 1], hs[s - 1]);
        for (double& x : us[s - 1]) x /= p.scale_factor;
        for (double& x : vs[s - 1]) x /= p.scale_factor;
    }

    FlowField flow(w, h);
    flow.u = std::move(us[0]);
    flow.v = std::move(vs[0]);
    return flow;
}

/// Backward warping: out(x) = img(x + flow(x)), bicubic sub-pixel sampling,
/// border clamp. Integer sampling positions reproduce exact pixel values.
inline Image warp(const Image& img, const FlowField& flow)
{
    if (img.width != flow.width || img.height != flow.height)
        throw std::invalid_argument("warp: shape mismatch");
    Image out(img.width, img.height, img.channels, 0.0, img.range_hint);
    const int w = img.width, h = img.height;
    std::vector<double> plane(static_cast<size_t>(w) * h), warped(plane.size());
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                plane[detail::ix(x, y, w)] = img.at(x, y, c);
        detail::bicubic_warp(plane, flow.u, flow.v, warped, w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(x, y, c) = warped[detail::ix(x, y, w)];
    }
    return out;
}

/// Central-difference divergence of the flow (one-sided at borders).
inline Image flow_divergence(const FlowField& flow)
{
    const int w = flow.width, h = flow.height;
    Image div(w, h, 1, 0.0, 1.0);
    auto dx_u = [&](int x, int y) {
        const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
        return (flow.u[detail::ix(xp, y, w)] - flow.u[detail::ix(xm, y, w)]) / (xp - xm);
    };
    auto dy_v = [&](int x, int y) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        return (flow.v[detail::ix(x, yp, w)] - flow.v[detail::ix(x, ym, w)]) / (yp - ym);
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            div.at(x, y) = dx_u(x, y) + dy_v(x, y);
    return div;
}

/// Flags pixels where div(flow) < -tau_div or the post-warp difference
/// (channel max) exceeds tau_color.
inline OcclusionMask occlusion_mask(const FlowField& flow, const Image& ref,
                                    const Image& warped, double tau_div, double tau_color)
{
    if (!ref.same_shape(warped) || ref.width != flow.width || ref.height != flow.height)
        throw std::invalid_argument("occlusion_mask: shape mismatch");
    const Image div = flow_divergence(flow);
    OcclusionMask mask(ref.width, ref.height);
    for (int y = 0; y < ref.height; ++y)
        for (int x = 0; x < ref.width; ++x) {
            bool occ = div.at(x, y) < -tau_div;
            if (!occ) {
                double dmax = 0.0;
                for (int c = 0; c < ref.channels; ++c)
                    dmax = std::max(dmax, std::abs(ref.at(x, y, c) - warped.at(x, y, c)));
                occ = dmax > tau_color;
            }
            mask.occluded[detail::ix(x, y, ref.width)] = occ ? 1 : 0;
        }
    return mask;
}

/// Constant-translation registration: the mean of the dense TV-L1 field,
/// broadcast to every pixel. Burst-style alternative to per-pixel flow.
inline FlowField global_shift_flow(const Image& src, const Image& dst, const FlowParams& p = {})
{
    const FlowField dense = tvl1_flow(src, dst, p);
    double mu = 0.0, mv = 0.0;
    for (size_t i = 0; i < dense.u.size(); ++i) {
        mu += dense.u[i];
        mv += dense.v[i];
    }
    mu /= static_cast<double>(dense.u.size());
    mv /= static_cast<double>(dense.v.size());
    FlowField out(dense.width, dense.height);
    std::fill(out.u.begin(), out.u.end(), mu);
    std::fill(out.v.begin(), out.v.end(), mv);
    return out;
}

enum class RegistrationKind { TvL1, GlobalShift };

inline FlowField compute_flow(RegistrationKind kind, const Image& src, const Image& dst,
                              const FlowParams& p)
{
    return kind == RegistrationKind::TvL1 ? tvl1_flow(src, dst, p)
                                          : global_shift_flow(src, dst, p);
}

// Middlebury .flo layout: magic float 202021.25, int32 width, int32 height,
// then row-major interleaved (u, v) float pairs.
inline void write_flo(const std::string& path, const FlowField& flow)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    const float magic = 202021.25f;
    const int32_t w = flow.width, h = flow.height;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> buf(2 * flow.u.size());
    for (size_t i = 0; i < flow.u.size(); ++i) {
        buf[2 * i] = static_cast<float>(flow.u[i]);
        buf[2 * i + 1] = static_cast<float>(flow.v[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline FlowField read_flo(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    float magic = 0.0f;
    int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (magic != 202021.25f || w <= 0 || h <= 0)
        throw std::runtime_error("bad .flo header: " + path);
    FlowField flow(w, h);
    std::vector<float> buf(2 * flow.u.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in)
        throw std::runtime_error("truncated .flo: " + path);
    for (size_t i = 0; i < flow.u.size(); ++i) {
        flow.u[i] = buf[2 * i];
        flow.v[i] = buf[2 * i + 1];
    }
    return flow;
}

}  // namespace cfaburst
