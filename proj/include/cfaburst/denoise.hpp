#pragma once

// Spatio-temporal patch-group PCA denoiser. Frames are warped onto the
// reference with TV-L1 flow, extended (multi-frame) patches are grouped by
// similarity on the Y channel, and 2D patches are denoised by canceling PCA
// coefficients along directions whose principal value falls below the noise
// threshold. One iteration, no oracle step.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "color.hpp"
#include "core.hpp"
#include "flow.hpp"
#include "parallel.hpp"

namespace cfaburst {

struct DenoiseParams {
    int side = 8;
    int K = 16;             // extended-patch neighbors
    int search_radius = 21; // pixels around the reference origin
    int stride = 4;         // reference tiling step (side/2)
    double tau = 2.0;       // principal-value threshold factor
    double sigma = 1.0;     // stabilized noise std
    double tau_div = 0.5;
    double tau_color = -1.0;   // < 0: defaults to 6*sigma
    int temporal_window = 0;   // frames warped around the reference; 0 = all
    FlowParams flow;
    RegistrationKind registration = RegistrationKind::TvL1;
    int workers = 0;
};

/// A reference-frame patch stacked with the same window from every warped
/// frame. Members overlapping occluded pixels fall back to the base patch so
/// group shapes stay uniform.
struct ExtendedPatch {
    int x0 = 0;
    int y0 = 0;
    int side = 0;
    int ref_member = 0;
    std::vector<Patch> members;
};

namespace detail {

inline bool window_occluded(const OcclusionMask& m, int x0, int y0, int side)
{
    for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i)
            if (m.at(x0 + i, y0 + j))
                return true;
    return false;
}

}  // namespace detail

/// masks[n] may be null (no occlusion handling for that member).
inline ExtendedPatch build_extended_patch(const std::vector<Image>& warped,
                                          const std::vector<const OcclusionMask*>& masks,
                                          int ref_member, int x, int y, int side)
{
    if (warped.empty())
        throw std::invalid_argument("build_extended_patch: no frames");
    ExtendedPatch ep;
    ep.side = side;
    ep.ref_member = ref_member;
    ep.x0 = clamp_origin(x, side, warped.front().width);
    ep.y0 = clamp_origin(y, side, warped.front().height);
    ep.members.reserve(warped.size());
    const Patch base = extract_patch(warped[ref_member], ep.x0, ep.y0, side, ref_member);
    for (int n = 0; n < static_cast<int>(warped.size()); ++n) {
        if (n == ref_member) {
            ep.members.push_back(base);
            continue;
        }
        const bool occluded = n < static_cast<int>(masks.size()) && masks[n] &&
                              detail::window_occluded(*masks[n], ep.x0, ep.y0, side);
        if (occluded) {
            Patch p = base;
            p.frame_index = n;
            ep.members.push_back(std::move(p));
        } else {
            ep.members.push_back(extract_patch(warped[n], ep.x0, ep.y0, side, n));
        }
    }
    return ep;
}

inline double extended_distance(const ExtendedPatch& a, const ExtendedPatch& b)
{
    double d = 0.0;
    for (size_t n = 0; n < a.members.size(); ++n) {
        const auto& va = a.members[n].values;
        const auto& vb = b.members[n].values;
        for (size_t i = 0; i < va.size(); ++i) {
            const double diff = va[i] - vb[i];
            d += diff * diff;
        }
    }
    return d;
}

/// Per-frame search state shared by every tile: guide planes plus, for each
/// member, a window-occlusion flag per patch origin (summed-area test).
struct GroupSearchContext {
    const std::vector<Image>* planes = nullptr;  // guide member planes, 1 channel
    int ref_member = 0;
    int side = 0;
    std::vector<std::vector<uint8_t>> window_occluded;  // [member][origin]

    GroupSearchContext(const std::vector<Image>& guide,
                       const std::vector<const OcclusionMask*>& masks, int ref, int patch_side)
        : planes(&guide), ref_member(ref), side(patch_side)
    {
        const int w = guide.front().width;
        const int h = guide.front().height;
        window_occluded.resize(guide.size());
        std::vector<long> sat(static_cast<size_t>(w + 1) * (h + 1));
        for (size_t n = 0; n < guide.size(); ++n) {
            if (static_cast<int>(n) == ref || n >= masks.size() || !masks[n] ||
                !masks[n]->any())
                continue;  // empty flag list = never occluded
            const OcclusionMask& m = *masks[n];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    sat[static_cast<size_t>(y + 1) * (w + 1) + (x + 1)] =
                        (m.at(x, y) ? 1 : 0) +
                        sat[static_cast<size_t>(y) * (w + 1) + (x + 1)] +
                        sat[static_cast<size_t>(y + 1) * (w + 1) + x] -
                        sat[static_cast<size_t>(y) * (w + 1) + x];
            auto& flags = window_occluded[n];
            flags.assign(static_cast<size_t>(w) * h, 0);
            for (int y = 0; y + side <= h; ++y)
                for (int x = 0; x + side <= w; ++x) {
                    const long cnt = sat[static_cast<size_t>(y + side) * (w + 1) + (x + side)] -
                                     sat[static_cast<size_t>(y) * (w + 1) + (x + side)] -
                                     sat[static_cast<size_t>(y + side) * (w + 1) + x] +
                                     sat[static_cast<size_t>(y) * (w + 1) + x];
                    flags[static_cast<size_t>(y) * w + x] = cnt > 0 ? 1 : 0;
                }
        }
    }

    bool occluded_at(int member, int x, int y) const
    {
        const auto& f = window_occluded[member];
        if (f.empty())
            return false;
        return f[static_cast<size_t>(y) * (*planes)[0].width + x] != 0;
    }
};

/// Origins of the K extended patches closest to the reference under the
/// summed member-wise squared distance, scanned row-major within the search
/// window; ties keep scan order. The reference itself is always selected
/// (self distance 0).
inline std::vector<std::pair<int, int>> find_group(const GroupSearchContext& ctx, int x0,
                                                   int y0, int K, int search_radius)
{
    const std::vector<Image>& planes = *ctx.planes;
    const int w = planes.front().width;
    const int h = planes.front().height;
    const int side = ctx.side;
    const int m = static_cast<int>(planes.size());
    const int rx = clamp_origin(x0, side, w);
    const int ry = clamp_origin(y0, side, h);

    struct Cand {
        double dist;
        int order;
        int x, y;
    };
    // keep the K smallest under (dist, scan order)
    std::vector<Cand> best;
    best.reserve(K);
    auto worse = [](const Cand& a, const Cand& b) {
        return a.dist != b.dist ? a.dist > b.dist : a.order > b.order;
    };
    int worst = -1;

    const int xmin = std::max(0, rx - search_radius);
    const int xmax = std::min(w - side, rx + search_radius);
    const int ymin = std::max(0, ry - search_radius);
    const int ymax = std::min(h - side, ry + search_radius);

    // member source rows under the occlusion fallback: an occluded window
    // reads the reference plane at its own origin
    const double* base = planes[ctx.ref_member].data.data();
    int order = 0;
    for (int y = ymin; y <= ymax; ++y)
        for (int x = xmin; x <= xmax; ++x, ++order) {
            const double abort_at =
                static_cast<int>(best.size()) == K ? best[worst].dist : -1.0;
            double d = 0.0;
            for (int n = 0; n < m && (abort_at < 0.0 || d <= abort_at); ++n) {
                const double* pn = planes[n].data.data();
                const double* ra = (n != ctx.ref_member && ctx.occluded_at(n, rx, ry)) ? base : pn;
                const double* rb = (n != ctx.ref_member && ctx.occluded_at(n, x, y)) ? base : pn;
                for (int j = 0; j < side; ++j) {
                    const double* pa = ra + static_cast<size_t>(ry + j) * w + rx;
                    const double* pb = rb + static_cast<size_t>(y + j) * w + x;
                    for (int i = 0; i < side; ++i) {
                        const double diff = pa[i] - pb[i];
                        d += diff * diff;
                    }
                }
            }
            const Cand cand{d, order, x, y};
            if (static_cast<int>(best.size()) < K) {
                best.push_back(cand);
                if (static_cast<int>(best.size()) == K) {
                    worst = 0;
                    for (int i = 1; i < K; ++i)
                        if (worse(best[i], best[worst])) worst = i;
                }
            } else if (worse(best[worst], cand)) {
                best[worst] = cand;
                worst = 0;
                for (int i = 1; i < K; ++i)
                    if (worse(best[i], best[worst])) worst = i;
            }
        }

    std::sort(best.begin(), best.end(), [](const Cand& a, const Cand& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.order < b.order;
    });
    std::vector<std::pair<int, int>> out;
    out.reserve(best.size());
    for (const Cand& c : best)
        out.emplace_back(c.x, c.y);
    return out;
}

inline std::vector<std::pair<int, int>> find_group(
    const std::vector<Image>& warped_guide, const std::vector<const OcclusionMask*>& masks,
    int ref_member, int x0, int y0, const DenoiseParams& prm)
{
    const GroupSearchContext ctx(warped_guide, masks, ref_member, prm.side);
    return find_group(ctx, x0, y0, prm.K, prm.search_radius);
}

/// In-place PCA thresholding of n patch vectors of dimension d (row-major).
/// Vectors are centered on their mean; coefficients along every principal
/// direction whose value (std, population covariance) is below tau*sigma are
/// zeroed; the mean is added back untouched.
inline void pca_denoise_group(std::vector<double>& rows, int n, int d, double sigma, double tau)
{
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (n <= 0 || static_cast<int>(rows.size()) != n * d)
        throw std::invalid_argument("pca_denoise_group: bad dimensions");
    Eigen::Map<Mat> x(rows.data(), n, d);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    Mat centered = x.rowwise() - mean;

    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("pca_denoise_group: eigendecomposition failed");

    const double thr = tau * sigma;
    int first_kept = d;  // eigenvalues ascending
    for (int i = 0; i < d; ++i)
        if (std::sqrt(std::max(eig.eigenvalues()[i], 0.0)) >= thr) {
            first_kept = i;
            break;
        }
    if (first_kept >= d) {
        x = mean.replicate(n, 1);
        return;
    }
    const auto kept = eig.eigenvectors().rightCols(d - first_kept);
    x = (centered * kept) * kept.transpose();
    x.rowwise() += mean;
}

namespace detail {

struct WarpedFrames {
    std::vector<Image> frames;               // warped 4-channel YUVW frames
    std::vector<OcclusionMask> masks;        // per member; empty for reference
    std::vector<const OcclusionMask*> mask_ptrs;
    int ref_member = 0;
};

inline WarpedFrames warp_onto_reference(const std::vector<Image>& yuvw, int k,
                                        const DenoiseParams& prm)
{
    const int n_frames = static_cast<int>(yuvw.size());
    std::vector<int> selected;
    if (prm.temporal_window > 0) {
        const int half = prm.temporal_window / 2;
        for (int n = std::max(0, k - half); n <= std::min(n_frames - 1, k + half); ++n)
            selected.push_back(n);
    } else {
        for (int n = 0; n < n_frames; ++n)
            selected.push_back(n);
    }

    WarpedFrames out;
    out.frames.resize(selected.size());
    out.masks.resize(selected.size());
    const double tau_color = prm.tau_color >= 0.0 ? prm.tau_color : 6.0 * prm.sigma;

    Image ref_y(yuvw[k].width, yuvw[k].height, 1, 0.0, yuvw[k].range_hint);
    for (int y = 0; y < ref_y.height; ++y)
        for (int x = 0; x < ref_y.width; ++x)
            ref_y.at(x, y) = yuvw[k].at(x, y, 0);

    parallel_for(static_cast<int>(selected.size()), prm.workers, [&](int i) {
        const int n = selected[i];
        if (n == k) {
            out.frames[i] = yuvw[k];
            out.masks[i] = OcclusionMask(ref_y.width, ref_y.height);
            return;
        }
        Image mov_y(ref_y.width, ref_y.height, 1, 0.0, ref_y.range_hint);
        for (int y = 0; y < ref_y.height; ++y)
            for (int x = 0; x < ref_y.width; ++x)
                mov_y.at(x, y) = yuvw[n].at(x, y, 0);
        const FlowField flow = compute_flow(prm.registration, ref_y, mov_y, prm.flow);
        out.frames[i] = warp(yuvw[n], flow);
        out.masks[i] = occlusion_mask(flow, yuvw[k], out.frames[i], prm.tau_div, tau_color);
    });

    out.mask_ptrs.resize(selected.size());
    for (size_t i = 0; i < selected.size(); ++i) {
        out.mask_ptrs[i] = &out.masks[i];
        if (selected[i] == k)
            out.ref_member = static_cast<int>(i);
    }
    return out;
}

inline std::vector<int> tile_origins(int extent, int side, int stride)
{
    std::vector<int> origins;
    for (int o = 0; o + side <= extent; o += stride)
        origins.push_back(o);
    if (origins.empty() || origins.back() != extent - side)
        origins.push_back(extent - side);
    return origins;
}

}  // namespace detail

/// Denoises frame k of a stabilized 4-channel sequence: YUVW decorrelation,
/// per-channel grouping + PCA thresholding with geometry and neighbor
/// selection computed once on Y, aggregation, inverse YUVW. Returns the
/// still-stabilized 4-channel result.
inline Image denoise_frame(const Sequence& quad_stab, int k, const DenoiseParams& prm)
{
    if (quad_stab.channels() != 4)
        throw std::invalid_argument("denoise_frame: expects 4-channel frames");
    if (k < 0 || k >= quad_stab.size())
        throw std::invalid_argument("denoise_frame: frame index out of range");
    const int w = quad_stab.width();
    const int h = quad_stab.height();
    if (prm.side > w || prm.side > h)
        throw std::invalid_argument("denoise_frame: patch larger than frame");

    std::vector<Image> yuvw(quad_stab.size());
    for (int n = 0; n < quad_stab.size(); ++n)
        yuvw[n] = yuvw_forward(QuadImage(quad_stab[n])).img;

    detail::WarpedFrames ctx = detail::warp_onto_reference(yuvw, k, prm);
    const int m = static_cast<int>(ctx.frames.size());

    // K*M must exceed the patch dimension for the PCA to be meaningful
    DenoiseParams eff = prm;
    const int dim = prm.side * prm.side;
    if (eff.K * m <= dim)
        eff.K = dim / m + 1;

    // split warped frames into per-channel planes; Y guides the selection
    std::vector<std::vector<Image>> planes(4);
    for (int c = 0; c < 4; ++c) {
        planes[c].resize(m);
        for (int n = 0; n < m; ++n) {
            planes[c][n] = Image(w, h, 1, 0.0, ctx.frames[n].range_hint);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    planes[c][n].at(x, y) = ctx.frames[n].at(x, y, c);
        }
    }

    const std::vector<int> xs = detail::tile_origins(w, eff.side, eff.stride);
    const std::vector<int> ys = detail::tile_origins(h, eff.side, eff.stride);
    const int n_tiles = static_cast<int>(xs.size() * ys.size());

    const GroupSearchContext search(planes[0], ctx.mask_ptrs, ctx.ref_member, eff.side);

    struct TileResult {
        std::vector<std::pair<int, int>> origins;     // K selected neighbors
        std::vector<double> denoised[4];              // K rows of side^2 each
    };
    std::vector<TileResult> tiles(n_tiles);

    parallel_for(n_tiles, eff.workers, [&](int t) {
        const int x0 = xs[t % xs.size()];
        const int y0 = ys[t / xs.size()];
        TileResult& tr = tiles[t];
        tr.origins = find_group(search, x0, y0, eff.K, eff.search_radius);
        const int kk = static_cast<int>(tr.origins.size());

        for (int c = 0; c < 4; ++c) {
            std::vector<double> rows(static_cast<size_t>(kk) * m * dim);
            size_t r = 0;
            for (const auto& [qx, qy] : tr.origins) {
                const ExtendedPatch ep = build_extended_patch(planes[c], ctx.mask_ptrs,
                                                              ctx.ref_member, qx, qy, eff.side);
                for (int n = 0; n < m; ++n) {
                    std::copy(ep.members[n].values.begin(), ep.members[n].values.end(),
                              rows.begin() + static_cast<long>(r) * dim);
                    ++r;
                }
            }
            pca_denoise_group(rows, kk * m, dim, eff.sigma, eff.tau);
            // keep the rows that live on the reference frame
            tr.denoised[c].resize(static_cast<size_t>(kk) * dim);
            for (int q = 0; q < kk; ++q)
                std::copy_n(rows.begin() + (static_cast<long>(q) * m + ctx.ref_member) * dim,
                            dim, tr.denoised[c].begin() + static_cast<long>(q) * dim);
        }
    });

    // sequential aggregation in tile order keeps results bit-reproducible
    Image out(w, h, 4, 0.0, quad_stab[k].range_hint);
    for (int c = 0; c < 4; ++c) {
        Accumulator acc(w, h, 1);
        for (const TileResult& tr : tiles)
            for (size_t q = 0; q < tr.origins.size(); ++q)
                acc.add_values(tr.origins[q].first, tr.origins[q].second, eff.side, 1,
                               tr.denoised[c].data() + q * dim, 1.0);
        const Image plane = acc.finalize(&planes[c][ctx.ref_member]);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(x, y, c) = plane.at(x, y);
    }
    return yuvw_inverse(QuadImage(std::move(out))).img;
}

/// The same procedure applied sequentially to every frame.
inline Sequence denoise_sequence(const Sequence& quad_stab, const DenoiseParams& prm)
{
    std::vector<Image> out;
    out.reserve(quad_stab.size());
    for (int k = 0; k < quad_stab.size(); ++k)
        out.push_back(denoise_frame(quad_stab, k, prm));
    return Sequence(std::move(out));
}

}  // namespace cfaburst
