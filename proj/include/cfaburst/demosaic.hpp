#pragma once

// Directional single-frame initialization (green first, channel differences
// for red/blue, a-posteriori direction choice by chrominance variation) and
// the decimation-masked spatio-temporal interpolation that refines it using
// motion-compensated patch redundancy across the sequence.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bayer.hpp"
#include "core.hpp"
#include "flow.hpp"
#include "parallel.hpp"

namespace cfaburst {

struct InterpConfig {
    int side = 8;
    int K = 8;              // extended-patch neighbors
    int search_radius = 15; // pixels around the reference origin
    int stride = 4;
    double h = 2.0;         // similarity bandwidth, intensity units
    double min_weight = 1e-7;  // validation cutoff: reject very different patches
    int workers = 0;
};

namespace detail {

// Bilinear interpolation of values living on the subgrid (ox+2i, oy+2j),
// replicating at the borders of the subgrid.
inline Image interp_subgrid_bilinear(const Image& values, int ox, int oy, int w, int h)
{
    const int nx = values.width;
    const int ny = values.height;
    Image out(w, h, 1, 0.0, values.range_hint);
    for (int y = 0; y < h; ++y) {
        const double jf = (y - oy) / 2.0;
        int j0 = static_cast<int>(std::floor(jf));
        double ty = jf - j0;
        if (j0 < 0) { j0 = 0; ty = 0.0; }
        if (j0 >= ny - 1) { j0 = ny - 1; ty = 0.0; }
        const int j1 = std::min(j0 + 1, ny - 1);
        for (int x = 0; x < w; ++x) {
            const double if_ = (x - ox) / 2.0;
            int i0 = static_cast<int>(std::floor(if_));
            double tx = if_ - i0;
            if (i0 < 0) { i0 = 0; tx = 0.0; }
            if (i0 >= nx - 1) { i0 = nx - 1; tx = 0.0; }
            const int i1 = std::min(i0 + 1, nx - 1);
            out.at(x, y) = (1 - ty) * ((1 - tx) * values.at(i0, j0) + tx * values.at(i1, j0)) +
                           ty * ((1 - tx) * values.at(i0, j1) + tx * values.at(i1, j1));
        }
    }
    return out;
}

// orthonormal YUV used only for the direction decision
inline void rgb_to_yuv(double r, double g, double b, double& y, double& u, double& v)
{
    static const double s3 = std::sqrt(3.0), s2 = std::sqrt(2.0), s6 = std::sqrt(6.0);
    y = (r + g + b) / s3;
    u = (r - b) / s2;
    v = (r - 2.0 * g + b) / s6;
}

}  // namespace detail

namespace detail {

struct DirectionalCandidates {
    std::array<Image, 4> color;      // full color per direction (N, S, E, W)
    std::array<Image, 4> variation;  // chrominance variation per direction
};

inline DirectionalCandidates directional_candidates(const CfaImage& cfa)
{
    const Image& in = cfa.img;
    const int w = in.width, h = in.height;
    const BayerPattern pat = cfa.pattern;

    auto s = [&](int x, int y) { return in.at_mirrored(x, y); };

    // four green candidates; green sites keep the CFA sample
    std::array<Image, 4> green;
    for (auto& g : green)
        g = Image(w, h, 1, 0.0, in.range_hint);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (bayer_color(pat, x, y) == 1) {
                for (auto& g : green)
                    g.at(x, y) = in.at(x, y);
                continue;
            }
            const double c = in.at(x, y);
            green[0].at(x, y) = s(x, y - 1) + 0.5 * (c - s(x, y - 2));  // north
            green[1].at(x, y) = s(x, y + 1) + 0.5 * (c - s(x, y + 2));  // south
            green[2].at(x, y) = s(x + 1, y) + 0.5 * (c - s(x + 2, y));  // east
            green[3].at(x, y) = s(x - 1, y) + 0.5 * (c - s(x - 2, y));  // west
        }

    // per direction, full color via channel-difference interpolation
    int rx = -1, ry = -1, bx = -1, by = -1;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            if (bayer_color(pat, dx, dy) == 0) { rx = dx; ry = dy; }
            if (bayer_color(pat, dx, dy) == 2) { bx = dx; by = dy; }
        }

    std::array<Image, 4> color;
    for (int d = 0; d < 4; ++d) {
        Image dr(w / 2, h / 2, 1, 0.0, in.range_hint);
        Image db(w / 2, h / 2, 1, 0.0, in.range_hint);
        for (int j = 0; j < h / 2; ++j)
            for (int i = 0; i < w / 2; ++i) {
                dr.at(i, j) = green[d].at(rx + 2 * i, ry + 2 * j) - in.at(rx + 2 * i, ry + 2 * j);
                db.at(i, j) = green[d].at(bx + 2 * i, by + 2 * j) - in.at(bx + 2 * i, by + 2 * j);
            }
        const Image drf = detail::interp_subgrid_bilinear(dr, rx, ry, w, h);
        const Image dbf = detail::interp_subgrid_bilinear(db, bx, by, w, h);
        color[d] = Image(w, h, 3, 0.0, in.range_hint);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double g = green[d].at(x, y);
                color[d].at(x, y, 0) = g - drf.at(x, y);
                color[d].at(x, y, 1) = g;
                color[d].at(x, y, 2) = g - dbf.at(x, y);
            }
    }

    // chrominance variation of each candidate: |dU|+|dV| summed on 3x3
    std::array<Image, 4> variation;
    for (int d = 0; d < 4; ++d) {
        Image u(w, h, 1), v(w, h, 1), yimg(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double py, pu, pv;
                detail::rgb_to_yuv(color[d].at(x, y, 0), color[d].at(x, y, 1),
                                   color[d].at(x, y, 2), py, pu, pv);
                yimg.at(x, y) = py;
                u.at(x, y) = pu;
                v.at(x, y) = pv;
            }
        Image grad(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                grad.at(x, y) =
                    std::abs(0.5 * (u.at_mirrored(x + 1, y) - u.at_mirrored(x - 1, y))) +
                    std::abs(0.5 * (u.at_mirrored(x, y + 1) - u.at_mirrored(x, y - 1))) +
                    std::abs(0.5 * (v.at_mirrored(x + 1, y) - v.at_mirrored(x - 1, y))) +
                    std::abs(0.5 * (v.at_mirrored(x, y + 1) - v.at_mirrored(x, y - 1)));
        variation[d] = Image(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int j = -1; j <= 1; ++j)
                    for (int i = -1; i <= 1; ++i)
                        acc += grad.at_mirrored(x + i, y + j);
                variation[d].at(x, y) = acc;
            }
    }
    return {std::move(color), std::move(variation)};
}

}  // namespace detail

/// Single-frame initialization: at each red/blue site the green is estimated
/// along north, south, east and west with a second-order correction from the
/// co-located channel; red/blue follow by bilinear interpolation of the
/// green-red and green-blue differences per direction; the final pixel takes
/// the direction with the least chrominance variation in a 3x3 window.
inline Image directional_init(const CfaImage& cfa)
{
    const auto cand = detail::directional_candidates(cfa);
    const int w = cfa.img.width, h = cfa.img.height;
    Image out(w, h, 3, 0.0, cfa.img.range_hint);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            for (int d = 1; d < 4; ++d)
                if (cand.variation[d].at(x, y) < cand.variation[best].at(x, y)) best = d;
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = cand.color[best].at(x, y, c);
        }
    return out;
}

/// Per-pixel chosen direction (0=N, 1=S, 2=E, 3=W).
inline Image directional_decision(const CfaImage& cfa)
{
    const auto cand = detail::directional_candidates(cfa);
    const int w = cfa.img.width, h = cfa.img.height;
    Image out(w, h, 1, 0.0, 3.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            for (int d = 1; d < 4; ++d)
                if (cand.variation[d].at(x, y) < cand.variation[best].at(x, y)) best = d;
            out.at(x, y) = best;
        }
    return out;
}

namespace detail {

inline int round_shift(double v) { return static_cast<int>(std::lround(v)); }

inline std::vector<int> interp_tile_origins(int extent, int side, int stride)
{
    std::vector<int> origins;
    for (int o = 0; o + side <= extent; o += stride)
        origins.push_back(o);
    if (origins.empty() || origins.back() != extent - side)
        origins.push_back(extent - side);
    return origins;
}

// mean squared difference between two windows of single-channel images
inline double window_msd(const Image& a, int ax, int ay, const Image& b, int bx, int by,
                         int side)
{
    double d = 0.0;
    for (int j = 0; j < side; ++j) {
        const double* pa = &a.data[(static_cast<size_t>(ay + j) * a.width + ax)];
        const double* pb = &b.data[(static_cast<size_t>(by + j) * b.width + bx)];
        for (int i = 0; i < side; ++i) {
            const double diff = pa[i] - pb[i];
            d += diff * diff;
        }
    }
    return d / static_cast<double>(side * side);
}

}  // namespace detail

/// Decimation-masked weighted averaging of the K nearest motion-compensated
/// extended patches. tilde holds the values to combine, guide drives both the
/// extended-patch selection and the per-patch weights, mask marks original
/// sample positions (shared by all frames), flows[n] is the forward flow from
/// the reference frame to frame n. Pixels whose normalization stays zero keep
/// their tilde value.
inline Image st_interpolate(const std::vector<Image>& tilde, const std::vector<Image>& guide,
                            const Image& mask, const std::vector<FlowField>& flows,
                            const InterpConfig& cfg, int ref)
{
    if (tilde.empty())
        throw std::invalid_argument("st_interpolate: empty sequence");
    if (tilde.size() != guide.size() || tilde.size() != flows.size())
        throw std::invalid_argument("st_interpolate: sequence length mismatch");
    const int w = tilde.front().width;
    const int h = tilde.front().height;
    if (mask.width != w || mask.height != h)
        throw std::invalid_argument("st_interpolate: mask size mismatch");
    const int n_frames = static_cast<int>(tilde.size());
    const int side = cfg.side;
    const int dim = side * side;
    const double h2 = cfg.h * cfg.h;

    const std::vector<int> xs = detail::interp_tile_origins(w, side, cfg.stride);
    const std::vector<int> ys = detail::interp_tile_origins(h, side, cfg.stride);
    const int n_tiles = static_cast<int>(xs.size() * ys.size());

    struct TileEstimate {
        int x0, y0;
        std::vector<double> values;  // side^2, already normalized (or fallback)
    };
    std::vector<TileEstimate> tiles(n_tiles);

    // member origin of a patch at q under the flow toward frame n, taken at
    // the patch center
    auto member_origin = [&](int n, int qx, int qy, int& mx, int& my) {
        if (n == ref) {
            mx = qx;
            my = qy;
            return;
        }
        const int cx = std::min(qx + side / 2, w - 1);
        const int cy = std::min(qy + side / 2, h - 1);
        const size_t c = static_cast<size_t>(cy) * w + cx;
        mx = clamp_origin(qx + detail::round_shift(flows[n].u[c]), side, w);
        my = clamp_origin(qy + detail::round_shift(flows[n].v[c]), side, h);
    };

    parallel_for(n_tiles, cfg.workers, [&](int t) {
        const int x0 = xs[t % xs.size()];
        const int y0 = ys[t / xs.size()];

        // reference extension: member origins per frame
        std::vector<int> rmx(n_frames), rmy(n_frames);
        for (int n = 0; n < n_frames; ++n)
            member_origin(n, x0, y0, rmx[n], rmy[n]);

        // K nearest extended candidates by the summed member-wise distance
        struct Cand {
            double dist;
            int order;
            int x, y;
        };
        std::vector<Cand> best;
        best.reserve(cfg.K);
        auto worse = [](const Cand& a, const Cand& b) {
            return a.dist != b.dist ? a.dist > b.dist : a.order > b.order;
        };
        int worst = -1;
        const int xmin = std::max(0, x0 - cfg.search_radius);
        const int xmax = std::min(w - side, x0 + cfg.search_radius);
        const int ymin = std::max(0, y0 - cfg.search_radius);
        const int ymax = std::min(h - side, y0 + cfg.search_radius);
        int order = 0;
        for (int qy = ymin; qy <= ymax; ++qy)
            for (int qx = xmin; qx <= xmax; ++qx, ++order) {
                const double abort_at =
                    static_cast<int>(best.size()) == cfg.K ? best[worst].dist : -1.0;
                double d = 0.0;
                for (int n = 0; n < n_frames && (abort_at < 0.0 || d <= abort_at); ++n) {
                    int mx, my;
                    member_origin(n, qx, qy, mx, my);
                    d += detail::window_msd(guide[n], rmx[n], rmy[n], guide[n], mx, my, side);
                }
                const Cand cand{d, order, qx, qy};
                if (static_cast<int>(best.size()) < cfg.K) {
                    best.push_back(cand);
                    if (static_cast<int>(best.size()) == cfg.K) {
                        worst = 0;
                        for (int i = 1; i < static_cast<int>(best.size()); ++i)
                            if (worse(best[i], best[worst])) worst = i;
                    }
                } else if (worse(best[worst], cand)) {
                    best[worst] = cand;
                    worst = 0;
                    for (int i = 1; i < static_cast<int>(best.size()); ++i)
                        if (worse(best[i], best[worst])) worst = i;
                }
            }
        std::sort(best.begin(), best.end(), [](const Cand& a, const Cand& b) {
            return a.dist != b.dist ? a.dist < b.dist : a.order < b.order;
        });

        // masked weighted accumulation over the K*N member patches; members
        // whose similarity weight falls below the cutoff are rejected rather
        // than normalized back up (validation against very different patches)
        std::vector<double> num(dim, 0.0), den(dim, 0.0);
        for (const Cand& c : best) {
            for (int n = 0; n < n_frames; ++n) {
                int mx, my;
                member_origin(n, c.x, c.y, mx, my);
                const double msd = detail::window_msd(guide[ref], x0, y0, guide[n], mx, my, side);
                const double wgt = std::exp(-msd / h2);
                if (wgt < cfg.min_weight)
                    continue;
                for (int j = 0; j < side; ++j)
                    for (int i = 0; i < side; ++i) {
                        const double m = mask.at(mx + i, my + j);
                        if (m <= 0.0)
                            continue;
                        num[j * side + i] += wgt * tilde[n].at(mx + i, my + j);
                        den[j * side + i] += wgt;
                    }
            }
        }
        TileEstimate& te = tiles[t];
        te.x0 = x0;
        te.y0 = y0;
        te.values.resize(dim);
        for (int j = 0; j < side; ++j)
            for (int i = 0; i < side; ++i) {
                const int q = j * side + i;
                te.values[q] = den[q] > 0.0 ? num[q] / den[q]
                                            : tilde[ref].at(x0 + i, y0 + j);
            }
    });

    Accumulator acc(w, h, 1);
    for (const TileEstimate& te : tiles)
        acc.add_values(te.x0, te.y0, side, 1, te.values.data(), 1.0);
    return acc.finalize(&tilde[ref]);
}

struct DemosaickResult {
    std::vector<Image> init;    // directional initialization per frame (3ch)
    std::vector<Image> green;   // updated green per frame (1ch)
    std::vector<Image> output;  // final frames (3ch)
};

/// Green-first spatio-temporal demosaicking of a CFA sequence: directional
/// init, TV-L1 flows on the initial green, quincunx-masked green update, then
/// red-green / blue-green difference updates guided by the updated green.
/// No occlusion masking in this stage.
inline DemosaickResult demosaick_sequence(const std::vector<CfaImage>& cfa_seq,
                                          const InterpConfig& cfg, const FlowParams& fp = {},
                                          RegistrationKind reg = RegistrationKind::TvL1,
                                          bool st_stage = true)
{
    if (cfa_seq.empty())
        throw std::invalid_argument("demosaick_sequence: empty sequence");
    const int n = static_cast<int>(cfa_seq.size());
    const int w = cfa_seq.front().img.width;
    const int h = cfa_seq.front().img.height;
    for (const auto& c : cfa_seq)
        if (c.img.width != w || c.img.height != h || c.pattern != cfa_seq.front().pattern)
            throw std::invalid_argument("demosaick_sequence: inconsistent frames");

    DemosaickResult res;
    res.init.resize(n);
    parallel_for(n, cfg.workers, [&](int i) { res.init[i] = directional_init(cfa_seq[i]); });
    if (!st_stage) {
        res.output = res.init;
        for (int i = 0; i < n; ++i) {
            res.green.emplace_back(w, h, 1, 0.0, res.init[i].range_hint);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    res.green[i].at(x, y) = res.init[i].at(x, y, 1);
        }
        return res;
    }

    std::vector<Image> init_green(n);
    for (int i = 0; i < n; ++i) {
        init_green[i] = Image(w, h, 1, 0.0, res.init[i].range_hint);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                init_green[i].at(x, y) = res.init[i].at(x, y, 1);
    }

    // forward flows between every ordered pair on the initial green
    std::vector<std::vector<FlowField>> flows(n, std::vector<FlowField>(n));
    {
        std::vector<std::pair<int, int>> pairs;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) pairs.emplace_back(i, j);
        parallel_for(static_cast<int>(pairs.size()), cfg.workers, [&](int p) {
            const auto [i, j] = pairs[p];
            flows[i][j] = compute_flow(reg, init_green[i], init_green[j], fp);
        });
        for (int i = 0; i < n; ++i)
            flows[i][i] = FlowField(w, h);
    }

    const BayerPattern pat = cfa_seq.front().pattern;
    const Image gmask = channel_mask(pat, 1, w, h);
    const Image rmask = channel_mask(pat, 0, w, h);
    const Image bmask = channel_mask(pat, 2, w, h);

    res.green.resize(n);
    for (int i = 0; i < n; ++i)
        res.green[i] = st_interpolate(init_green, init_green, gmask, flows[i], cfg, i);

    // red and blue as differences against the updated green, distances on
    // the updated green sequence
    std::vector<Image> rdiff(n), bdiff(n);
    for (int i = 0; i < n; ++i) {
        rdiff[i] = Image(w, h, 1, 0.0, res.init[i].range_hint);
        bdiff[i] = Image(w, h, 1, 0.0, res.init[i].range_hint);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                rdiff[i].at(x, y) = res.init[i].at(x, y, 0) - res.green[i].at(x, y);
                bdiff[i].at(x, y) = res.init[i].at(x, y, 2) - res.green[i].at(x, y);
            }
    }

    res.output.resize(n);
    for (int i = 0; i < n; ++i) {
        const Image r_upd = st_interpolate(rdiff, res.green, rmask, flows[i], cfg, i);
        const Image b_upd = st_interpolate(bdiff, res.green, bmask, flows[i], cfg, i);
        res.output[i] = Image(w, h, 3, 0.0, res.init[i].range_hint);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                res.output[i].at(x, y, 0) = r_upd.at(x, y) + res.green[i].at(x, y);
                res.output[i].at(x, y, 1) = res.green[i].at(x, y);
                res.output[i].at(x, y, 2) = b_upd.at(x, y) + res.green[i].at(x, y);
            }
    }
    return res;
}

}  // namespace cfaburst
