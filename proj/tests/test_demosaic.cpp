#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <cfaburst/demosaic.hpp>
#include <cfaburst/pipeline.hpp>

using namespace cfaburst;

namespace {

// brute-force reference for the masked weighted averaging: direct nested
// loops over candidates, members and pixels, written independently of
// st_interpolate
Image brute_force_interpolate(const std::vector<Image>& tilde,
                              const std::vector<Image>& guide, const Image& mask,
                              const std::vector<FlowField>& flows, const InterpConfig& cfg,
                              int ref)
{
    const int w = tilde.front().width;
    const int h = tilde.front().height;
    const int n_frames = static_cast<int>(tilde.size());
    const int side = cfg.side;

    auto origin_of = [&](int n, int qx, int qy, int& ox, int& oy) {
        if (n == ref) {
            ox = qx;
            oy = qy;
            return;
        }
        const int cx = std::min(qx + side / 2, w - 1);
        const int cy = std::min(qy + side / 2, h - 1);
        ox = std::clamp(qx + static_cast<int>(std::lround(
                                 flows[n].u[static_cast<size_t>(cy) * w + cx])),
                        0, w - side);
        oy = std::clamp(qy + static_cast<int>(std::lround(
                                 flows[n].v[static_cast<size_t>(cy) * w + cx])),
                        0, h - side);
    };
    auto msd = [&](const Image& a, int ax, int ay, const Image& b, int bx, int by) {
        double acc = 0.0;
        for (int j = 0; j < side; ++j)
            for (int i = 0; i < side; ++i) {
                const double d = a.at(ax + i, ay + j) - b.at(bx + i, by + j);
                acc += d * d;
            }
        return acc / (side * side);
    };

    std::vector<int> xs, ys;
    for (int o = 0; o + side <= w; o += cfg.stride)
        xs.push_back(o);
    if (xs.empty() || xs.back() != w - side)
        xs.push_back(w - side);
    for (int o = 0; o + side <= h; o += cfg.stride)
        ys.push_back(o);
    if (ys.empty() || ys.back() != h - side)
        ys.push_back(h - side);

    struct Est {
        int x0, y0;
        std::vector<double> v;
    };
    std::vector<Est> estimates;
    for (int y0 : ys)
        for (int x0 : xs) {
            // rank all candidates by the summed member-wise distance
            struct C {
                double d;
                int order, x, y;
            };
            std::vector<C> cands;
            int order = 0;
            for (int qy = std::max(0, y0 - cfg.search_radius);
                 qy <= std::min(h - side, y0 + cfg.search_radius); ++qy)
                for (int qx = std::max(0, x0 - cfg.search_radius);
                     qx <= std::min(w - side, x0 + cfg.search_radius); ++qx, ++order) {
                    double d = 0.0;
                    for (int n = 0; n < n_frames; ++n) {
                        int rx, ry, mx, my;
                        origin_of(n, x0, y0, rx, ry);
                        origin_of(n, qx, qy, mx, my);
                        d += msd(guide[n], rx, ry, guide[n], mx, my);
                    }
                    cands.push_back({d, order, qx, qy});
                }
            std::stable_sort(cands.begin(), cands.end(),
                             [](const C& a, const C& b) { return a.d < b.d; });
            cands.resize(std::min<size_t>(cfg.K, cands.size()));

            std::vector<double> num(side * side, 0.0), den(side * side, 0.0);
            for (const C& c : cands)
                for (int n = 0; n < n_frames; ++n) {
                    int mx, my;
                    origin_of(n, c.x, c.y, mx, my);
                    const double wgt =
                        std::exp(-msd(guide[ref], x0, y0, guide[n], mx, my) /
                                 (cfg.h * cfg.h));
                    if (wgt < cfg.min_weight)
                        continue;
                    for (int j = 0; j < side; ++j)
                        for (int i = 0; i < side; ++i)
                            if (mask.at(mx + i, my + j) > 0.0) {
                                num[j * side + i] += wgt * tilde[n].at(mx + i, my + j);
                                den[j * side + i] += wgt;
                            }
                }
            Est e{x0, y0, std::vector<double>(side * side)};
            for (int j = 0; j < side; ++j)
                for (int i = 0; i < side; ++i)
                    e.v[j * side + i] = den[j * side + i] > 0.0
                                            ? num[j * side + i] / den[j * side + i]
                                            : tilde[ref].at(x0 + i, y0 + j);
            estimates.push_back(std::move(e));
        }

    Image sum(w, h, 1, 0.0), weight(w, h, 1, 0.0);
    for (const Est& e : estimates)
        for (int j = 0; j < side; ++j)
            for (int i = 0; i < side; ++i) {
                sum.at(e.x0 + i, e.y0 + j) += e.v[j * side + i];
                weight.at(e.x0 + i, e.y0 + j) += 1.0;
            }
    Image out(w, h, 1, 0.0, tilde[ref].range_hint);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y) = weight.at(x, y) > 0.0 ? sum.at(x, y) / weight.at(x, y)
                                                 : tilde[ref].at(x, y);
    return out;
}

Image constant_color(int w, int h, double r, double g, double b)
{
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    return img;
}

}  // namespace

TEST_CASE("directional initialization")
{
    SECTION("constant color reconstructs exactly, all directions agree")
    {
        const Image clean = constant_color(16, 16, 80, 120, 40);
        const CfaImage cfa = mosaic(clean, BayerPattern::RGGB);
        const auto cand = detail::directional_candidates(cfa);
        for (int d = 0; d < 4; ++d)
            for (size_t i = 0; i < clean.data.size(); ++i)
                CHECK(cand.color[d].data[i] == Catch::Approx(clean.data[i]).margin(1e-12));
        const Image out = directional_init(cfa);
        for (size_t i = 0; i < clean.data.size(); ++i)
            CHECK(out.data[i] == Catch::Approx(clean.data[i]).margin(1e-12));
    }

    SECTION("horizontal ramps are reproduced exactly in the interior")
    {
        Image clean(16, 16, 3);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                clean.at(x, y, 0) = 40.0 + 3.0 * x;
                clean.at(x, y, 1) = 60.0 + 3.0 * x;
                clean.at(x, y, 2) = 20.0 + 3.0 * x;
            }
        const CfaImage cfa = mosaic(clean, BayerPattern::RGGB);
        const auto cand = detail::directional_candidates(cfa);
        // east/west green estimates are exact away from the mirror border
        for (int d : {2, 3})
            for (int y = 2; y < 14; ++y)
                for (int x = 2; x < 14; ++x)
                    CHECK(cand.color[d].at(x, y, 1) ==
                          Catch::Approx(clean.at(x, y, 1)).margin(1e-9));
        const Image out = directional_init(cfa);
        for (int y = 2; y < 14; ++y)
            for (int x = 2; x < 14; ++x)
                CHECK(out.at(x, y, 1) == Catch::Approx(clean.at(x, y, 1)).margin(1e-9));
    }

    SECTION("vertical edge chooses a vertical direction on the edge")
    {
        Image clean(16, 16, 3);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c)
                    clean.at(x, y, c) = x < 8 ? 30.0 + 10.0 * c : 200.0 - 15.0 * c;
        const CfaImage cfa = mosaic(clean, BayerPattern::RGGB);
        const Image decision = directional_decision(cfa);
        const auto cand = detail::directional_candidates(cfa);

        for (int y = 4; y < 12; ++y)
            for (int x = 7; x <= 8; ++x) {
                // brute-force check of the decision rule itself
                int best = 0;
                for (int d = 1; d < 4; ++d)
                    if (cand.variation[d].at(x, y) < cand.variation[best].at(x, y))
                        best = d;
                CHECK(decision.at(x, y) == best);
                // and the winner on the edge is north or south
                CHECK(decision.at(x, y) <= 1.0);
            }
    }
}

TEST_CASE("spatio-temporal interpolation")
{
    InterpConfig cfg;
    cfg.side = 4;
    cfg.K = 3;
    cfg.search_radius = 3;
    cfg.stride = 2;
    cfg.h = 10.0;

    SECTION("constant sequence stays constant under any covering mask")
    {
        const int n = 3;
        std::vector<Image> tilde(n, Image(12, 12, 1, 42.0));
        std::vector<Image> guide = tilde;
        Image mask = channel_mask(BayerPattern::RGGB, 1, 12, 12);
        std::vector<FlowField> flows(n, FlowField(12, 12));
        const Image out = st_interpolate(tilde, guide, mask, flows, cfg, 1);
        for (double v : out.data)
            CHECK(v == Catch::Approx(42.0).margin(1e-12));
    }

    SECTION("h -> infinity reduces to the unweighted mean of masked candidates")
    {
        std::mt19937 rng(3);
        std::uniform_real_distribution<double> dist(0.0, 255.0);
        const int n = 2;
        std::vector<Image> tilde, guide;
        for (int f = 0; f < n; ++f) {
            Image img(12, 12, 1);
            for (double& v : img.data)
                v = dist(rng);
            tilde.push_back(img);
            guide.push_back(img);
        }
        Image mask = channel_mask(BayerPattern::RGGB, 1, 12, 12);
        std::vector<FlowField> flows(n, FlowField(12, 12));
        InterpConfig inf_cfg = cfg;
        inf_cfg.h = 1e9;
        const Image got = st_interpolate(tilde, guide, mask, flows, inf_cfg, 0);
        const Image want = brute_force_interpolate(tilde, guide, mask, flows, inf_cfg, 0);
        for (size_t i = 0; i < got.data.size(); ++i)
            CHECK(got.data[i] == Catch::Approx(want.data[i]).margin(1e-10));
    }

    SECTION("single frame, K=1, full mask is the identity")
    {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> dist(0.0, 255.0);
        Image img(12, 12, 1);
        for (double& v : img.data)
            v = dist(rng);
        Image mask(12, 12, 1, 1.0);
        InterpConfig id_cfg = cfg;
        id_cfg.K = 1;
        const Image out = st_interpolate({img}, {img}, mask, {FlowField(12, 12)}, id_cfg, 0);
        for (size_t i = 0; i < out.data.size(); ++i)
            CHECK(out.data[i] == Catch::Approx(img.data[i]).margin(1e-12));
    }

    SECTION("weighted-mean formula on three hand-placed candidates")
    {
        // one 4x4 frame per candidate value is awkward; instead evaluate the
        // formula directly: values {10,20,40} at distances {0, h^2, 4 h^2}
        const double h = 3.0;
        const double num = 10.0 + 20.0 * std::exp(-1.0) + 40.0 * std::exp(-4.0);
        const double den = 1.0 + std::exp(-1.0) + std::exp(-4.0);
        CHECK(num / den == Catch::Approx(13.050265896336104).epsilon(1e-12));

        // and the implementation reproduces it through a constructed toy:
        // three one-patch frames whose guide distances to the reference are
        // 0, h^2 and 4 h^2
        const int side = 4;
        InterpConfig toy;
        toy.side = side;
        toy.K = 1;  // single spatial candidate; the three frames supply members
        toy.search_radius = 0;
        toy.stride = side;
        toy.h = h;
        std::vector<Image> tilde, guide;
        const double offsets[3] = {0.0, h, 2.0 * h};  // per-pixel diff d gives msd d^2
        const double values[3] = {10.0, 20.0, 40.0};
        for (int f = 0; f < 3; ++f) {
            tilde.emplace_back(side, side, 1, values[f]);
            guide.emplace_back(side, side, 1, 100.0 + offsets[f]);
        }
        Image mask(side, side, 1, 1.0);
        std::vector<FlowField> flows(3, FlowField(side, side));
        const Image out = st_interpolate(tilde, guide, mask, flows, toy, 0);
        for (double v : out.data)
            CHECK(v == Catch::Approx(num / den).epsilon(1e-12));
    }

    SECTION("toy inputs match the brute-force reference to 1e-10")
    {
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> dist(0.0, 255.0);
        std::uniform_real_distribution<double> fdist(-1.6, 1.6);
        const int n = 3, w = 14, h = 12;
        std::vector<Image> tilde, guide;
        for (int f = 0; f < n; ++f) {
            Image t(w, h, 1), g(w, h, 1);
            for (double& v : t.data)
                v = dist(rng);
            for (double& v : g.data)
                v = dist(rng);
            tilde.push_back(t);
            guide.push_back(g);
        }
        Image mask = channel_mask(BayerPattern::GRBG, 1, w, h);
        std::vector<FlowField> flows;
        for (int f = 0; f < n; ++f) {
            FlowField fl(w, h);
            for (size_t i = 0; i < fl.u.size(); ++i) {
                fl.u[i] = fdist(rng);
                fl.v[i] = fdist(rng);
            }
            flows.push_back(fl);
        }
        for (int ref = 0; ref < n; ++ref) {
            const Image got = st_interpolate(tilde, guide, mask, flows, cfg, ref);
            const Image want = brute_force_interpolate(tilde, guide, mask, flows, cfg, ref);
            for (size_t i = 0; i < got.data.size(); ++i)
                CHECK(got.data[i] == Catch::Approx(want.data[i]).margin(1e-10));
        }
    }

    SECTION("masked-out samples are never read (sentinel poisoning)")
    {
        // with K = all candidates, every patch pixel sees both quincunx
        // parities, so the zero-normalization fallback never fires and any
        // sentinel in the output indicts the masked accumulation itself
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> dist(0.0, 100.0);
        const int n = 2, w = 12, h = 12;
        const Image mask = channel_mask(BayerPattern::RGGB, 1, w, h);
        std::vector<Image> tilde, guide;
        for (int f = 0; f < n; ++f) {
            Image t(w, h, 1), g(w, h, 1);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    g.at(x, y) = dist(rng);
                    t.at(x, y) = mask.at(x, y) > 0.0 ? dist(rng) : 1e12;  // sentinel
                }
            tilde.push_back(t);
            guide.push_back(g);
        }
        std::vector<FlowField> flows(n, FlowField(w, h));
        InterpConfig all_cfg = cfg;
        all_cfg.K = 1000;
        const Image out = st_interpolate(tilde, guide, mask, flows, all_cfg, 0);
        for (double v : out.data)
            CHECK(v < 1e6);
    }

    SECTION("output is a convex combination of masked candidates where C > 0")
    {
        std::mt19937 rng(13);
        std::uniform_real_distribution<double> dist(50.0, 60.0);
        const int n = 2, w = 12, h = 12;
        std::vector<Image> tilde, guide;
        for (int f = 0; f < n; ++f) {
            Image t(w, h, 1);
            for (double& v : t.data)
                v = dist(rng);
            tilde.push_back(t);
            guide.push_back(t);
        }
        Image mask(w, h, 1, 1.0);
        std::vector<FlowField> flows(n, FlowField(w, h));
        const Image out = st_interpolate(tilde, guide, mask, flows, cfg, 0);
        for (double v : out.data) {
            CHECK(v >= 50.0 - 1e-9);
            CHECK(v <= 60.0 + 1e-9);
        }
    }
}

TEST_CASE("sequence demosaicking")
{
    SECTION("noise-free constant-color sequence reconstructs exactly")
    {
        const Image clean = constant_color(32, 32, 90, 140, 60);
        std::vector<CfaImage> cfa;
        for (int f = 0; f < 4; ++f)
            cfa.push_back(mosaic(clean, BayerPattern::RGGB));
        InterpConfig cfg;
        cfg.K = 4;
        cfg.search_radius = 4;
        const DemosaickResult res = demosaick_sequence(cfa, cfg);
        for (const Image& frame : res.output)
            for (size_t i = 0; i < clean.data.size(); ++i)
                CHECK(std::abs(frame.data[i] - clean.data[i]) < 1e-9);
    }

    SECTION("channel-difference round trip holds pixelwise")
    {
        std::mt19937 rng(17);
        std::uniform_real_distribution<double> dist(20.0, 230.0);
        Image clean(16, 16, 3);
        for (double& v : clean.data)
            v = dist(rng);
        std::vector<CfaImage> cfa;
        for (int f = 0; f < 2; ++f)
            cfa.push_back(mosaic(clean, BayerPattern::RGGB));
        InterpConfig cfg;
        cfg.side = 4;
        cfg.K = 3;
        cfg.search_radius = 3;
        const DemosaickResult res = demosaick_sequence(cfa, cfg);
        // red output minus updated green must itself be an aggregate of the
        // difference pass; the invariant testable from outside is exact
        // consistency between output channels and the green intermediate
        for (int f = 0; f < 2; ++f)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x)
                    CHECK(res.output[f].at(x, y, 1) ==
                          Catch::Approx(res.green[f].at(x, y)).margin(0.0));
    }

    SECTION("spatio-temporal pass does not degrade the init on static noise-free data")
    {
        std::mt19937 rng(19);
        Image clean(32, 32, 3);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const double base = 100.0 + 50.0 * std::sin(0.35 * x) * std::sin(0.3 * y);
                clean.at(x, y, 0) = base * 0.9;
                clean.at(x, y, 1) = base;
                clean.at(x, y, 2) = base * 0.8;
            }
        std::vector<CfaImage> cfa;
        for (int f = 0; f < 4; ++f)
            cfa.push_back(mosaic(clean, BayerPattern::RGGB));
        InterpConfig cfg;
        cfg.K = 6;
        cfg.search_radius = 6;
        cfg.h = 0.5;  // noise-free data: bandwidth tracks the (absent) noise
        const DemosaickResult res = demosaick_sequence(cfa, cfg);
        const double rmse_init = rmse(res.init[1], clean);
        const double rmse_out = rmse(res.output[1], clean);
        CHECK(rmse_out <= rmse_init + 1e-9);

        // CFA sites may be modified, but on noise-free data only slightly
        const Image gmask = channel_mask(BayerPattern::RGGB, 1, 32, 32);
        double max_mod = 0.0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if (gmask.at(x, y) > 0.0)
                    max_mod = std::max(max_mod,
                                       std::abs(res.output[1].at(x, y, 1) - clean.at(x, y, 1)));
        CHECK(max_mod < 3.0);
    }
}
