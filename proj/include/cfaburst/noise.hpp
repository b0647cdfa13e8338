#pragma once

// Signal-dependent noise estimation on 4-channel sequences, the continuous
// two-segment linear sigma(intensity) model, and the generalized variance
// stabilization f(u) = integral_0^u c/g(t) dt with its inverse.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace cfaburst {

struct NoiseObservation {
    double x = 0.0;      // bin-center intensity
    double sigma = 0.0;  // estimated noise std at that intensity
    long count = 0;      // blocks that fed the estimate
};

/// One channel of the noise model: sigma(x) is linear below the breakpoint
/// and linear above it, continuous at the joint.
struct ChannelModel {
    double slope1 = 0.0, intercept1 = 0.0;
    double slope2 = 0.0, intercept2 = 0.0;
    double breakpoint = 0.0;
    double min_x = 0.0, max_x = 255.0;
    bool single_segment_fallback = false;

    double sigma_floor() const
    {
        const double span = max_x - min_x;
        return 1e-3 * (span > 1e-9 ? span : std::max(1.0, std::abs(max_x)));
    }

    double eval(double x) const
    {
        x = std::clamp(x, min_x, max_x);
        const double s = x <= breakpoint ? slope1 * x + intercept1
                                         : slope2 * x + intercept2;
        return std::max(s, sigma_floor());
    }
};

struct NoiseModel {
    std::vector<ChannelModel> channels;
};

struct NoiseEstimationParams {
    int block_size = 8;
    int block_stride = 2;
    int bins = 16;
    double quantile = 0.005;  // flattest fraction per bin
    int min_bin_blocks = 50;  // bins with fewer blocks are dropped
    int min_select = 32;      // selection floor so small bins stay usable
};

namespace detail {

// Orthonormal 2D DCT-II basis for w x w blocks.
struct DctBasis {
    int w;
    std::vector<double> m;  // row-major w x w

    explicit DctBasis(int width) : w(width), m(static_cast<size_t>(width) * width)
    {
        const double pi = std::acos(-1.0);
        for (int k = 0; k < w; ++k) {
            const double a = std::sqrt((k == 0 ? 1.0 : 2.0) / w);
            for (int n = 0; n < w; ++n)
                m[static_cast<size_t>(k) * w + n] = a * std::cos(pi * (2 * n + 1) * k / (2.0 * w));
        }
    }

    // out = M * block * M^T
    void transform(const double* block, double* out, double* tmp) const
    {
        for (int k = 0; k < w; ++k)
            for (int n = 0; n < w; ++n) {
                double acc = 0.0;
                for (int t = 0; t < w; ++t)
                    acc += m[static_cast<size_t>(k) * w + t] * block[static_cast<size_t>(t) * w + n];
                tmp[static_cast<size_t>(k) * w + n] = acc;
            }
        for (int k = 0; k < w; ++k)
            for (int n = 0; n < w; ++n) {
                double acc = 0.0;
                for (int t = 0; t < w; ++t)
                    acc += tmp[static_cast<size_t>(k) * w + t] * m[static_cast<size_t>(n) * w + t];
                out[static_cast<size_t>(k) * w + n] = acc;
            }
    }
};

struct BlockStats {
    double mean;
    double low_energy;            // flatness score, lowest-frequency quarter
    std::vector<double> high_sq;  // squared high-frequency coefficients
};

}  // namespace detail

/// Bins overlapping blocks of every frame by mean and estimates, per channel
/// and bin, the noise std from the high-frequency DCT energy of the flattest
/// blocks in the bin. Returns one observation list per channel.
inline std::vector<std::vector<NoiseObservation>> estimate_noise_curve(
    const Sequence& seq, const NoiseEstimationParams& prm = {})
{
    const int w = prm.block_size;
    if (seq.width() < w || seq.height() < w)
        throw std::invalid_argument("estimate_noise_curve: frames smaller than block");
    if (prm.bins < 2)
        throw std::invalid_argument("estimate_noise_curve: bins must be >= 2");

    const detail::DctBasis dct(w);
    const int t_low = w / 2;    // flatness: 0 < i+j <= t_low
    const int t_high = w + 1;   // noise: i+j >= t_high
    std::vector<int> high_pos;
    for (int j = 0; j < w; ++j)
        for (int i = 0; i < w; ++i)
            if (i + j >= t_high) high_pos.push_back(j * w + i);

    const int channels = seq.channels();
    std::vector<std::vector<NoiseObservation>> result(channels);

    std::vector<double> block(static_cast<size_t>(w) * w);
    std::vector<double> coef(block.size()), tmp(block.size());

    for (int ch = 0; ch < channels; ++ch) {
        std::vector<detail::BlockStats> stats;
        for (int f = 0; f < seq.size(); ++f) {
            const Image& img = seq[f];
            for (int y = 0; y + w <= img.height; y += prm.block_stride)
                for (int x = 0; x + w <= img.width; x += prm.block_stride) {
                    double mean = 0.0;
                    for (int j = 0; j < w; ++j)
                        for (int i = 0; i < w; ++i) {
                            const double v = img.at(x + i, y + j, ch);
                            block[static_cast<size_t>(j) * w + i] = v;
                            mean += v;
                        }
                    mean /= static_cast<double>(w * w);
                    dct.transform(block.data(), coef.data(), tmp.data());

                    detail::BlockStats s;
                    s.mean = mean;
                    s.low_energy = 0.0;
                    for (int j = 0; j <= t_low; ++j)
                        for (int i = 0; i + j <= t_low; ++i)
                            if (i + j > 0)
                                s.low_energy += coef[static_cast<size_t>(j) * w + i] *
                                                coef[static_cast<size_t>(j) * w + i];
                    s.high_sq.reserve(high_pos.size());
                    for (int p : high_pos)
                        s.high_sq.push_back(coef[p] * coef[p]);
                    stats.push_back(std::move(s));
                }
        }
        if (stats.empty())
            throw std::runtime_error("estimate_noise_curve: no blocks");

        double lo = stats.front().mean, hi = stats.front().mean;
        for (const auto& s : stats) {
            lo = std::min(lo, s.mean);
            hi = std::max(hi, s.mean);
        }
        const bool degenerate = hi - lo < 1e-12;
        const int bins = degenerate ? 1 : prm.bins;
        const double width = degenerate ? 1.0 : (hi - lo) / bins;

        std::vector<std::vector<int>> members(bins);
        for (int i = 0; i < static_cast<int>(stats.size()); ++i) {
            int b = degenerate ? 0
                               : std::min(bins - 1, static_cast<int>((stats[i].mean - lo) / width));
            members[b].push_back(i);
        }

        for (int b = 0; b < bins; ++b) {
            auto& idx = members[b];
            if (static_cast<int>(idx.size()) < prm.min_bin_blocks)
                continue;
            long k = std::lround(prm.quantile * static_cast<double>(idx.size()));
            k = std::clamp<long>(k, prm.min_select, static_cast<long>(idx.size()));
            std::stable_sort(idx.begin(), idx.end(), [&](int a, int c) {
                return stats[a].low_energy < stats[c].low_energy;
            });

            // sigma^2 = median over high-frequency positions of the mean
            // squared coefficient across the selected blocks
            std::vector<double> pos_mean(high_pos.size(), 0.0);
            for (long s = 0; s < k; ++s) {
                const auto& hs = stats[idx[s]].high_sq;
                for (size_t p = 0; p < hs.size(); ++p)
                    pos_mean[p] += hs[p];
            }
            for (double& v : pos_mean)
                v /= static_cast<double>(k);
            std::nth_element(pos_mean.begin(), pos_mean.begin() + pos_mean.size() / 2,
                             pos_mean.end());
            const double med = pos_mean[pos_mean.size() / 2];

            NoiseObservation obs;
            obs.x = degenerate ? lo : lo + (b + 0.5) * width;
            obs.sigma = std::sqrt(std::max(med, 0.0));
            obs.count = k;
            result[ch].push_back(obs);
        }
        if (result[ch].empty())
            throw std::runtime_error("estimate_noise_curve: all bins empty (degenerate image)");
    }
    return result;
}

namespace detail {

// Least squares for sigma(x) = v + s1*min(x-b,0) + s2*max(x-b,0) at a fixed
// breakpoint b; returns false when either side is underpopulated.
inline bool fit_at_breakpoint(const std::vector<NoiseObservation>& obs, double b,
                              double& v, double& s1, double& s2, double& residual)
{
    int n_left = 0, n_right = 0;
    for (const auto& o : obs)
        (o.x <= b ? n_left : n_right)++;
    if (n_left < 2 || n_right < 2)
        return false;

    double a[3][3] = {{0}}, rhs[3] = {0};
    for (const auto& o : obs) {
        const double d = o.x - b;
        const double row[3] = {1.0, std::min(d, 0.0), std::max(d, 0.0)};
        for (int i = 0; i < 3; ++i) {
            rhs[i] += row[i] * o.sigma;
            for (int j = 0; j < 3; ++j)
                a[i][j] += row[i] * row[j];
        }
    }
    // 3x3 Gaussian elimination with partial pivoting
    int piv[3] = {0, 1, 2};
    for (int c = 0; c < 3; ++c) {
        int best = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs(a[piv[r]][c]) > std::abs(a[piv[best]][c])) best = r;
        std::swap(piv[c], piv[best]);
        if (std::abs(a[piv[c]][c]) < 1e-12)
            return false;
        for (int r = c + 1; r < 3; ++r) {
            const double m = a[piv[r]][c] / a[piv[c]][c];
            for (int k = c; k < 3; ++k)
                a[piv[r]][k] -= m * a[piv[c]][k];
            rhs[piv[r]] -= m * rhs[piv[c]];
        }
    }
    double sol[3];
    for (int c = 2; c >= 0; --c) {
        double acc = rhs[piv[c]];
        for (int k = c + 1; k < 3; ++k)
            acc -= a[piv[c]][k] * sol[k];
        sol[c] = acc / a[piv[c]][c];
    }
    v = sol[0];
    s1 = sol[1];
    s2 = sol[2];

    residual = 0.0;
    for (const auto& o : obs) {
        const double d = o.x - b;
        const double pred = v + s1 * std::min(d, 0.0) + s2 * std::max(d, 0.0);
        residual += (pred - o.sigma) * (pred - o.sigma);
    }
    return true;
}

inline void single_line_fit(const std::vector<NoiseObservation>& obs, ChannelModel& m)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(obs.size());
    for (const auto& o : obs) {
        sx += o.x;
        sy += o.sigma;
        sxx += o.x * o.x;
        sxy += o.x * o.sigma;
    }
    const double det = n * sxx - sx * sx;
    double slope = 0.0, intercept = sy / n;
    if (std::abs(det) > 1e-12) {
        slope = (n * sxy - sx * sy) / det;
        intercept = (sy - slope * sx) / n;
    }
    m.slope1 = m.slope2 = slope;
    m.intercept1 = m.intercept2 = intercept;
    m.breakpoint = 0.5 * (m.min_x + m.max_x);
}

}  // namespace detail

/// Continuous two-segment least-squares fit. The breakpoint is scanned on a
/// grid of candidates between the 5th and 95th intensity percentiles; at
/// each candidate the constrained problem is linear and solved exactly.
/// Fewer than 3 observations fall back to a single line (flagged).
inline ChannelModel fit_piecewise_linear(std::vector<NoiseObservation> obs,
                                         int breakpoint_candidates = 64)
{
    if (obs.empty())
        throw std::invalid_argument("fit_piecewise_linear: no observations");
    std::sort(obs.begin(), obs.end(),
              [](const NoiseObservation& a, const NoiseObservation& b) { return a.x < b.x; });

    ChannelModel m;
    m.min_x = obs.front().x;
    m.max_x = obs.back().x;

    if (obs.size() < 3) {
        detail::single_line_fit(obs, m);
        m.single_segment_fallback = true;
        return m;
    }

    const size_t n = obs.size();
    const double p5 = obs[static_cast<size_t>(0.05 * (n - 1))].x;
    const double p95 = obs[static_cast<size_t>(0.95 * (n - 1))].x;

    double best_res = -1.0;
    double best_b = 0.0, best_v = 0.0, best_s1 = 0.0, best_s2 = 0.0;
    for (int i = 0; i < breakpoint_candidates; ++i) {
        const double b = breakpoint_candidates == 1
                             ? 0.5 * (p5 + p95)
                             : p5 + (p95 - p5) * i / (breakpoint_candidates - 1);
        double v, s1, s2, res;
        if (!detail::fit_at_breakpoint(obs, b, v, s1, s2, res))
            continue;
        if (best_res < 0.0 || res < best_res) {
            best_res = res;
            best_b = b;
            best_v = v;
            best_s1 = s1;
            best_s2 = s2;
        }
    }
    if (best_res < 0.0) {
        detail::single_line_fit(obs, m);
        m.single_segment_fallback = true;
        return m;
    }
    m.breakpoint = best_b;
    m.slope1 = best_s1;
    m.intercept1 = best_v - best_s1 * best_b;
    m.slope2 = best_s2;
    m.intercept2 = best_v - best_s2 * best_b;
    return m;
}

/// Tabulated stabilizer. The integral is taken in s = sqrt(u), where the
/// integrand 2s/g(s^2) stays bounded for any positive-floored g and the
/// Poisson case g = sqrt reduces to a constant, so the trapezoid rule is
/// exact there. The table is uniform in s; forward lookup is O(1), inverse
/// is a binary search on the monotone table.
struct Stabilizer {
    double c = 1.0;
    double max_u = 255.0;
    double ds = 0.0;
    std::vector<double> f;  // f[i] = f(s_i^2), s_i = i*ds

    double forward(double u) const
    {
        const double s = std::sqrt(std::clamp(u, 0.0, max_u));
        const double t = s / ds;
        const auto i = static_cast<size_t>(std::min(t, static_cast<double>(f.size() - 2)));
        const double frac = t - static_cast<double>(i);
        return f[i] + frac * (f[i + 1] - f[i]);
    }

    double inverse(double y) const
    {
        y = std::clamp(y, f.front(), f.back());
        size_t lo = 0, hi = f.size() - 1;
        while (hi - lo > 1) {
            const size_t mid = (lo + hi) / 2;
            (f[mid] <= y ? lo : hi) = mid;
        }
        const double span = f[hi] - f[lo];
        const double frac = span > 0.0 ? (y - f[lo]) / span : 0.0;
        const double s = (static_cast<double>(lo) + frac) * ds;
        return s * s;
    }
};

inline Stabilizer build_stabilizer(const std::function<double(double)>& sigma,
                                   double max_u, double c, int grid = 4096)
{
    if (c <= 0.0)
        throw std::invalid_argument("build_stabilizer: c must be positive");
    if (max_u <= 0.0 || grid < 8)
        throw std::invalid_argument("build_stabilizer: bad range or grid");
    Stabilizer st;
    st.c = c;
    st.max_u = max_u;
    st.ds = std::sqrt(max_u) / (grid - 1);
    st.f.resize(grid);

    std::vector<double> integrand(grid);
    for (int i = 1; i < grid; ++i) {
        const double s = i * st.ds;
        const double g = sigma(s * s);
        if (!(g > 0.0))
            throw std::invalid_argument("build_stabilizer: non-positive sigma in range");
        integrand[i] = 2.0 * s / g;
    }
    // u = 0: exact 0 when g(0) > 0; otherwise the integrable-singularity
    // limit, extrapolated from the first interior node
    const double g0 = sigma(0.0);
    integrand[0] = g0 > 0.0 ? 0.0 : integrand[1];

    st.f[0] = 0.0;
    for (int i = 1; i < grid; ++i)
        st.f[i] = st.f[i - 1] + 0.5 * (integrand[i - 1] + integrand[i]) * st.ds;
    for (double& v : st.f)
        v *= c;
    for (int i = 1; i < grid; ++i)
        if (!(st.f[i] > st.f[i - 1]))
            throw std::runtime_error("build_stabilizer: f not strictly increasing");
    return st;
}

/// max_u <= 0 tabulates over the model range; pass the observed data
/// maximum to avoid flattening samples brighter than the top bin center
/// (eval extends the outer segments by clamping).
inline Stabilizer build_stabilizer(const ChannelModel& m, double c, double max_u = 0.0,
                                   int grid = 4096)
{
    const double top = max_u > 0.0 ? std::max(max_u, m.max_x) : m.max_x;
    return build_stabilizer([&m](double t) { return m.eval(t); }, top, c, grid);
}

/// c making the stabilized range match the classical Anscombe range of the
/// same data (the paper's normalization convention).
inline double anscombe_matched_c(const std::function<double(double)>& sigma, double max_u,
                                 int grid = 4096)
{
    const Stabilizer unit = build_stabilizer(sigma, max_u, 1.0, grid);
    const double classical = 2.0 * std::sqrt(max_u + 0.375) - 2.0 * std::sqrt(0.375);
    return classical / unit.f.back();
}

inline Image stabilize(const Image& img, const Stabilizer& st)
{
    Image out = img;
    for (double& v : out.data)
        v = st.forward(v);
    return out;
}

inline Image unstabilize(const Image& img, const Stabilizer& st)
{
    Image out = img;
    for (double& v : out.data)
        v = st.inverse(v);
    return out;
}

inline Image classical_anscombe(const Image& img)
{
    Image out = img;
    for (double& v : out.data)
        v = 2.0 * std::sqrt(std::max(v, 0.0) + 0.375);
    return out;
}

inline void write_noise_model(const std::string& path, const NoiseModel& model)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "# channel slope1 intercept1 slope2 intercept2 breakpoint min max\n";
    out.precision(12);
    for (size_t ch = 0; ch < model.channels.size(); ++ch) {
        const ChannelModel& m = model.channels[ch];
        out << ch << " " << m.slope1 << " " << m.intercept1 << " " << m.slope2 << " "
            << m.intercept2 << " " << m.breakpoint << " " << m.min_x << " " << m.max_x
            << "\n";
    }
}

inline NoiseModel read_noise_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    NoiseModel model;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ss(line);
        int ch;
        ChannelModel m;
        if (!(ss >> ch >> m.slope1 >> m.intercept1 >> m.slope2 >> m.intercept2 >>
              m.breakpoint >> m.min_x >> m.max_x))
            throw std::runtime_error("bad noise model line: " + line);
        model.channels.push_back(m);
    }
    if (model.channels.empty())
        throw std::runtime_error("empty noise model: " + path);
    return model;
}

inline void write_observations_csv(const std::string& path,
                                   const std::vector<std::vector<NoiseObservation>>& obs)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "channel,bin_center,sigma,count\n";
    out.precision(10);
    for (size_t ch = 0; ch < obs.size(); ++ch)
        for (const auto& o : obs[ch])
            out << ch << "," << o.x << "," << o.sigma << "," << o.count << "\n";
}

inline std::vector<std::vector<NoiseObservation>> read_observations_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::vector<std::vector<NoiseObservation>> obs;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ss(line);
        std::string field;
        NoiseObservation o;
        std::getline(ss, field, ',');
        const int ch = std::stoi(field);
        std::getline(ss, field, ',');
        o.x = std::stod(field);
        std::getline(ss, field, ',');
        o.sigma = std::stod(field);
        std::getline(ss, field, ',');
        o.count = std::stol(field);
        if (ch >= static_cast<int>(obs.size()))
            obs.resize(ch + 1);
        obs[ch].push_back(o);
    }
    return obs;
}

}  // namespace cfaburst
