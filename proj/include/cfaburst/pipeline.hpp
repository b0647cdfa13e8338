#pragma once

// Pipeline orchestration: simulation (mosaic + seeded noise), the staged
// chain (noise estimation, stabilization, YUVW PCA denoising, directional
// init, spatio-temporal demosaicking, imaging chain) with per-stage toggles,
// and central-frame RMSE reporting.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bayer.hpp"
#include "color.hpp"
#include "core.hpp"
#include "demosaic.hpp"
#include "denoise.hpp"
#include "flow.hpp"
#include "noise.hpp"

namespace cfaburst {

/// Box-Muller normal sampler over mt19937_64 so seeded runs are bit-identical
/// everywhere (std::normal_distribution is implementation-defined).
struct GaussianSampler {
    std::mt19937_64 rng;
    double spare = 0.0;
    bool has_spare = false;

    explicit GaussianSampler(uint64_t seed) : rng(seed) {}

    double uniform01()
    {
        // (0, 1]
        return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    }

    double next()
    {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::acos(-1.0) * u2;
        spare = r * std::sin(a);
        has_spare = true;
        return r * std::cos(a);
    }
};

inline Image add_gaussian_noise(const Image& img, double sigma, uint64_t seed)
{
    GaussianSampler g(seed);
    Image out = img;
    for (double& v : out.data)
        v += sigma * g.next();
    return out;
}

inline Image add_signal_dependent_noise(const Image& img,
                                        const std::function<double(double)>& sigma_of_u,
                                        uint64_t seed)
{
    GaussianSampler g(seed);
    Image out = img;
    for (double& v : out.data)
        v += sigma_of_u(v) * g.next();
    return out;
}

/// Mosaic each frame and add i.i.d. Gaussian noise of std sigma,
/// deterministic under the seed. No imaging chain is applied.
inline std::vector<CfaImage> simulate(const std::vector<Image>& clean, BayerPattern pattern,
                                      double sigma, uint64_t seed)
{
    if (sigma < 0.0)
        throw std::invalid_argument("simulate: negative sigma");
    std::vector<CfaImage> out;
    out.reserve(clean.size());
    for (size_t i = 0; i < clean.size(); ++i) {
        CfaImage cfa = mosaic(clean[i], pattern);
        if (sigma > 0.0)
            cfa.img = add_gaussian_noise(cfa.img, sigma, seed + 0x9e3779b97f4a7c15ull * (i + 1));
        out.push_back(std::move(cfa));
    }
    return out;
}

struct PipelineConfig {
    BayerPattern pattern = BayerPattern::RGGB;
    bool denoise = true;
    bool demosaick_st = true;
    bool imaging_chain = false;

    bool noise_auto = true;   // estimate the model; otherwise fixed_sigma
    double fixed_sigma = 10.0;
    double c = -1.0;          // stabilized amplitude; < 0 = Anscombe-matched
    NoiseEstimationParams noise_est;

    FlowParams flow;
    RegistrationKind registration = RegistrationKind::TvL1;

    DenoiseParams den;   // sigma/tau_color filled from the stabilizer
    InterpConfig interp;
    double h_factor = 2.0;       // bandwidth = h_factor * relevant noise std
    double residual_sigma = 1.0; // assumed residual noise after denoising
    bool h_explicit = false;     // interp.h was set by the user

    double gamma = 0.5;
    uint64_t seed = 0;
    int workers = 0;

    void validate() const
    {
        if (!denoise && !demosaick_st && !imaging_chain)
            throw std::invalid_argument("config: at least one stage must be enabled");
        if (gamma <= 0.0)
            throw std::invalid_argument("config: gamma must be positive");
    }
};

struct PipelineResult {
    std::vector<Image> output;  // 3-channel frames
    NoiseModel model;           // populated when the denoise stage ran
    double sigma_stabilized = 0.0;
    std::vector<Image> denoised_cfa;  // populated when the denoise stage ran
    DemosaickResult demosaick;
    std::vector<std::string> log;  // per-stage timing lines
};

namespace detail {

struct StageTimer {
    std::vector<std::string>& log;
    std::string name;
    std::chrono::steady_clock::time_point start;

    StageTimer(std::vector<std::string>& l, std::string n)
        : log(l), name(std::move(n)), start(std::chrono::steady_clock::now())
    {
    }

    ~StageTimer()
    {
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s: %.2f s", name.c_str(), s);
        log.emplace_back(buf);
    }
};

inline Image quad_plane(const Image& quad, int c)
{
    Image out(quad.width, quad.height, 1, 0.0, quad.range_hint);
    for (int y = 0; y < quad.height; ++y)
        for (int x = 0; x < quad.width; ++x)
            out.at(x, y) = quad.at(x, y, c);
    return out;
}

}  // namespace detail

/// Fits the per-channel model (estimated or synthetic constant-sigma),
/// returns the model plus one stabilizer per channel sharing amplitude c.
inline std::pair<NoiseModel, std::vector<Stabilizer>> prepare_stabilizers(
    const Sequence& quads, const PipelineConfig& cfg)
{
    NoiseModel model;
    const double range = quads[0].range_hint;
    if (cfg.noise_auto) {
        const auto obs = estimate_noise_curve(quads, cfg.noise_est);
        for (const auto& channel_obs : obs)
            model.channels.push_back(fit_piecewise_linear(channel_obs));
    } else {
        for (int c = 0; c < 4; ++c) {
            ChannelModel m;
            m.slope1 = m.slope2 = 0.0;
            m.intercept1 = m.intercept2 = std::max(cfg.fixed_sigma, 1e-6);
            m.min_x = 0.0;
            m.max_x = range;
            m.breakpoint = range / 2.0;
            model.channels.push_back(m);
        }
    }

    double c_shared = cfg.c;
    if (c_shared <= 0.0) {
        double acc = 0.0;
        for (const auto& m : model.channels)
            acc += anscombe_matched_c([&m](double t) { return m.eval(t); },
                                      std::max(m.max_x, 1.0));
        c_shared = acc / static_cast<double>(model.channels.size());
    }

    // tabulate past the brightest observed sample so nothing clamps
    double data_max = 1.0;
    for (int n = 0; n < quads.size(); ++n)
        for (double v : quads[n].data)
            data_max = std::max(data_max, v);

    std::vector<Stabilizer> stabs;
    for (const auto& m : model.channels)
        stabs.push_back(build_stabilizer(m, c_shared, data_max * 1.01));
    return {std::move(model), std::move(stabs)};
}

/// Executes the enabled stages in order on a CFA sequence and returns the
/// full-color result. Stage toggles reproduce the comparison variants:
/// neither stage = directional init only; denoise only = denoised CFA with
/// local init; st only = spatio-temporal demosaicking of the noisy CFA;
/// both = the full chain.
inline PipelineResult run_pipeline(const std::vector<CfaImage>& cfa_in, PipelineConfig cfg)
{
    cfg.validate();
    if (cfa_in.empty())
        throw std::invalid_argument("run_pipeline: empty input");
    PipelineResult res;
    std::vector<CfaImage> cfa = cfa_in;

    double noise_sigma_for_h = cfg.fixed_sigma;

    if (cfg.denoise) {
        detail::StageTimer t(res.log, "denoise");
        std::vector<Image> quads;
        quads.reserve(cfa.size());
        for (const auto& c : cfa)
            quads.push_back(cfa_to_quad(c).img);
        Sequence quad_seq(std::move(quads));

        auto [model, stabs] = prepare_stabilizers(quad_seq, cfg);
        res.model = model;
        const double c_shared = stabs.front().c;
        res.sigma_stabilized = c_shared;
        if (cfg.noise_auto) {
            // representative sigma for the demosaicking bandwidth
            double acc = 0.0;
            for (const auto& m : model.channels)
                acc += m.eval(0.5 * (m.min_x + m.max_x));
            noise_sigma_for_h = acc / static_cast<double>(model.channels.size());
        }

        const double stab_range =
            2.0 * std::sqrt(quad_seq[0].range_hint + 0.375) - 2.0 * std::sqrt(0.375);
        std::vector<Image> stabilized(quad_seq.size());
        for (int n = 0; n < quad_seq.size(); ++n) {
            stabilized[n] = Image(quad_seq.width(), quad_seq.height(), 4, 0.0, stab_range);
            for (int ch = 0; ch < 4; ++ch)
                for (int y = 0; y < quad_seq.height(); ++y)
                    for (int x = 0; x < quad_seq.width(); ++x)
                        stabilized[n].at(x, y, ch) = stabs[ch].forward(quad_seq[n].at(x, y, ch));
        }

        DenoiseParams dp = cfg.den;
        dp.sigma = c_shared;
        if (dp.tau_color < 0.0)
            dp.tau_color = 6.0 * c_shared;
        dp.flow = cfg.flow;
        dp.registration = cfg.registration;
        dp.workers = cfg.workers;
        const Sequence denoised = denoise_sequence(Sequence(std::move(stabilized)), dp);

        res.denoised_cfa.clear();
        for (int n = 0; n < denoised.size(); ++n) {
            Image quad(denoised[n].width, denoised[n].height, 4, 0.0, quad_seq[0].range_hint);
            for (int ch = 0; ch < 4; ++ch)
                for (int y = 0; y < quad.height; ++y)
                    for (int x = 0; x < quad.width; ++x)
                        quad.at(x, y, ch) = stabs[ch].inverse(denoised[n].at(x, y, ch));
            cfa[n] = quad_to_cfa(QuadImage(std::move(quad)), cfg.pattern);
            res.denoised_cfa.push_back(cfa[n].img);
        }
    } else if (cfg.noise_auto && cfg.demosaick_st) {
        // the bandwidth of the undenoised variant still tracks the noise
        detail::StageTimer t(res.log, "noise-estimate");
        std::vector<Image> quads;
        for (const auto& c : cfa)
            quads.push_back(cfa_to_quad(c).img);
        try {
            const auto obs = estimate_noise_curve(Sequence(std::move(quads)), cfg.noise_est);
            double acc = 0.0;
            long count = 0;
            for (const auto& channel_obs : obs)
                for (const auto& o : channel_obs) {
                    acc += o.sigma;
                    ++count;
                }
            if (count > 0)
                noise_sigma_for_h = acc / static_cast<double>(count);
        } catch (const std::exception&) {
            // degenerate content (e.g. constant frames): keep the configured sigma
        }
    }

    {
        detail::StageTimer t(res.log, cfg.demosaick_st ? "demosaick-st" : "demosaick-init");
        InterpConfig ic = cfg.interp;
        ic.workers = cfg.workers;
        if (!cfg.h_explicit)
            ic.h = cfg.h_factor * (cfg.denoise ? cfg.residual_sigma : noise_sigma_for_h);
        res.demosaick =
            demosaick_sequence(cfa, ic, cfg.flow, cfg.registration, cfg.demosaick_st);
        res.output = res.demosaick.output;
    }

    if (cfg.imaging_chain) {
        detail::StageTimer t(res.log, "imaging-chain");
        for (Image& frame : res.output)
            frame = gamma_correct(gray_world_wb(frame), cfg.gamma);
    }
    return res;
}

inline int central_index(int n_frames) { return (n_frames - 1) / 2; }

/// RMSE between the central frames of result and truth.
inline double central_frame_rmse(const std::vector<Image>& result,
                                 const std::vector<Image>& truth)
{
    if (result.size() != truth.size() || result.empty())
        throw std::invalid_argument("central_frame_rmse: sequence length mismatch");
    const int k = central_index(static_cast<int>(truth.size()));
    return rmse(result[k], truth[k]);
}

struct EvalReport {
    std::vector<std::string> variants;
    std::vector<std::string> sequences;
    std::vector<std::vector<double>> values;  // [variant][sequence]
    std::vector<double> averages;             // per variant

    std::string to_csv() const
    {
        std::ostringstream out;
        out << "# central-frame RMSE, computed on unclipped real-valued samples\n";
        out << "sequence";
        for (const auto& v : variants)
            out << "," << v;
        out << "\n";
        for (size_t s = 0; s < sequences.size(); ++s) {
            out << sequences[s];
            for (size_t v = 0; v < variants.size(); ++v)
                out << "," << values[v][s];
            out << "\n";
        }
        out << "average";
        for (double a : averages)
            out << "," << a;
        out << "\n";
        return out.str();
    }

    std::string to_text() const
    {
        std::ostringstream out;
        out << "central-frame RMSE (unclipped reals)\n";
        size_t name_w = 8;
        for (const auto& s : sequences)
            name_w = std::max(name_w, s.size());
        out << std::string(name_w, ' ');
        for (const auto& v : variants) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), " %14s", v.c_str());
            out << buf;
        }
        out << "\n";
        auto row = [&](const std::string& name, size_t s, bool avg) {
            out << name << std::string(name_w - name.size(), ' ');
            for (size_t v = 0; v < variants.size(); ++v) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), " %14.3f", avg ? averages[v] : values[v][s]);
                out << buf;
            }
            out << "\n";
        };
        for (size_t s = 0; s < sequences.size(); ++s)
            row(sequences[s], s, false);
        row("average", 0, true);
        return out.str();
    }
};

inline EvalReport evaluate(const std::vector<std::string>& variant_names,
                           const std::vector<std::vector<std::vector<Image>>>& results,
                           const std::vector<std::vector<Image>>& truths,
                           const std::vector<std::string>& sequence_names)
{
    if (variant_names.size() != results.size())
        throw std::invalid_argument("evaluate: variant count mismatch");
    EvalReport rep;
    rep.variants = variant_names;
    rep.sequences = sequence_names;
    rep.values.assign(variant_names.size(), std::vector<double>(truths.size(), 0.0));
    rep.averages.assign(variant_names.size(), 0.0);
    for (size_t v = 0; v < results.size(); ++v) {
        if (results[v].size() != truths.size())
            throw std::invalid_argument("evaluate: sequence count mismatch");
        for (size_t s = 0; s < truths.size(); ++s)
            rep.values[v][s] = central_frame_rmse(results[v][s], truths[s]);
        double acc = 0.0;
        for (double x : rep.values[v])
            acc += x;
        rep.averages[v] = acc / static_cast<double>(truths.size());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// key = value config with one section per stage

inline std::map<std::string, std::string> config_defaults()
{
    PipelineConfig d;
    std::map<std::string, std::string> m;
    auto put = [&m](const std::string& k, auto v) {
        std::ostringstream ss;
        ss << v;
        m[k] = ss.str();
    };
    put("pipeline.pattern", pattern_name(d.pattern));
    put("pipeline.denoise", d.denoise ? "on" : "off");
    put("pipeline.demosaick_st", d.demosaick_st ? "on" : "off");
    put("pipeline.imaging_chain", d.imaging_chain ? "on" : "off");
    put("pipeline.seed", d.seed);
    put("pipeline.workers", d.workers);
    put("pipeline.registration", "tvl1");
    put("noise.mode", "auto");
    put("noise.sigma", d.fixed_sigma);
    put("noise.c", "auto");
    put("noise.bins", d.noise_est.bins);
    put("noise.block_size", d.noise_est.block_size);
    put("noise.block_stride", d.noise_est.block_stride);
    put("flow.lambda", d.flow.lambda);
    put("flow.theta", d.flow.theta);
    put("flow.warps", d.flow.warps);
    put("flow.pyramid_scales", d.flow.pyramid_scales);
    put("flow.scale_factor", d.flow.scale_factor);
    put("flow.inner_iterations", d.flow.inner_iterations);
    put("denoise.side", d.den.side);
    put("denoise.K", d.den.K);
    put("denoise.search_radius", d.den.search_radius);
    put("denoise.stride", d.den.stride);
    put("denoise.tau", d.den.tau);
    put("denoise.tau_div", d.den.tau_div);
    put("denoise.tau_color", "auto");
    put("denoise.temporal_window", d.den.temporal_window);
    put("demosaick.side", d.interp.side);
    put("demosaick.K", d.interp.K);
    put("demosaick.search_radius", d.interp.search_radius);
    put("demosaick.stride", d.interp.stride);
    put("demosaick.h", "auto");
    put("demosaick.h_factor", d.h_factor);
    put("demosaick.residual_sigma", d.residual_sigma);
    put("imaging.gamma", d.gamma);
    return m;
}

namespace detail {

inline std::string trim(const std::string& s)
{
    size_t b = s.find_first_not_of(" \t\r\n");
    size_t e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v)
{
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean '" + v + "'");
}

}  // namespace detail

inline void parse_config_stream(std::istream& in, std::map<std::string, std::string>& kv)
{
    std::string line, section;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[' && line.back() == ']') {
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value, got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        kv[section.empty() ? key : section + "." + key] = val;
    }
}

inline PipelineConfig config_from_map(const std::map<std::string, std::string>& kv)
{
    PipelineConfig c;
    auto get = [&kv](const std::string& k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto geti = [&](const std::string& k, int& dst) {
        if (const auto* v = get(k)) dst = std::stoi(*v);
    };
    auto getd = [&](const std::string& k, double& dst) {
        if (const auto* v = get(k)) dst = std::stod(*v);
    };
    auto getb = [&](const std::string& k, bool& dst) {
        if (const auto* v = get(k)) dst = detail::parse_bool(*v);
    };

    if (const auto* v = get("pipeline.pattern")) c.pattern = parse_pattern(*v);
    getb("pipeline.denoise", c.denoise);
    getb("pipeline.demosaick_st", c.demosaick_st);
    getb("pipeline.imaging_chain", c.imaging_chain);
    if (const auto* v = get("pipeline.seed")) c.seed = std::stoull(*v);
    geti("pipeline.workers", c.workers);
    if (const auto* v = get("pipeline.registration")) {
        if (*v == "tvl1")
            c.registration = RegistrationKind::TvL1;
        else if (*v == "global_shift")
            c.registration = RegistrationKind::GlobalShift;
        else
            throw std::invalid_argument("config: unknown registration '" + *v + "'");
    }
    if (const auto* v = get("noise.mode")) {
        if (*v == "auto")
            c.noise_auto = true;
        else if (*v == "fixed")
            c.noise_auto = false;
        else
            throw std::invalid_argument("config: noise.mode must be auto or fixed");
    }
    getd("noise.sigma", c.fixed_sigma);
    if (const auto* v = get("noise.c"); v && *v != "auto") c.c = std::stod(*v);
    geti("noise.bins", c.noise_est.bins);
    geti("noise.block_size", c.noise_est.block_size);
    geti("noise.block_stride", c.noise_est.block_stride);
    getd("flow.lambda", c.flow.lambda);
    getd("flow.theta", c.flow.theta);
    geti("flow.warps", c.flow.warps);
    geti("flow.pyramid_scales", c.flow.pyramid_scales);
    getd("flow.scale_factor", c.flow.scale_factor);
    geti("flow.inner_iterations", c.flow.inner_iterations);
    geti("denoise.side", c.den.side);
    geti("denoise.K", c.den.K);
    geti("denoise.search_radius", c.den.search_radius);
    geti("denoise.stride", c.den.stride);
    getd("denoise.tau", c.den.tau);
    getd("denoise.tau_div", c.den.tau_div);
    if (const auto* v = get("denoise.tau_color"); v && *v != "auto")
        c.den.tau_color = std::stod(*v);
    geti("denoise.temporal_window", c.den.temporal_window);
    geti("demosaick.side", c.interp.side);
    geti("demosaick.K", c.interp.K);
    geti("demosaick.search_radius", c.interp.search_radius);
    geti("demosaick.stride", c.interp.stride);
    if (const auto* v = get("demosaick.h"); v && *v != "auto") {
        c.interp.h = std::stod(*v);
        c.h_explicit = true;
    }
    getd("demosaick.h_factor", c.h_factor);
    getd("demosaick.residual_sigma", c.residual_sigma);
    getd("imaging.gamma", c.gamma);
    return c;
}

inline std::string dump_config(const std::map<std::string, std::string>& kv)
{
    std::ostringstream out;
    std::string section;
    for (const auto& [key, val] : kv) {
        const size_t dot = key.find('.');
        const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
        if (sec != section) {
            if (!section.empty() || !out.str().empty())
                out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << " = " << val << "\n";
    }
    return out.str();
}

inline PipelineConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides = {})
{
    std::map<std::string, std::string> kv;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("config: cannot open " + path);
        parse_config_stream(in, kv);
    }
    for (const std::string& o : overrides) {
        const size_t eq = o.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must be section.key=value: " + o);
        kv[detail::trim(o.substr(0, eq))] = detail::trim(o.substr(eq + 1));
    }
    return config_from_map(kv);
}

}  // namespace cfaburst
