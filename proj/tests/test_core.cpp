#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <cfaburst/core.hpp>

using namespace cfaburst;

namespace {

Image random_image(int w, int h, int c, std::mt19937& rng, double lo = 0.0, double hi = 255.0)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Image img(w, h, c);
    for (double& v : img.data)
        v = dist(rng);
    return img;
}

}  // namespace

TEST_CASE("extract_patch basics")
{
    SECTION("1x1 patch of a constant image")
    {
        Image img(4, 4, 1, 7.0);
        const Patch p = extract_patch(img, 0, 0, 1);
        REQUIRE(p.values.size() == 1);
        CHECK(p.values[0] == 7.0);
    }

    SECTION("2x2 direct read-off")
    {
        Image img(2, 2, 1);
        img.at(0, 0) = 1;
        img.at(1, 0) = 2;
        img.at(0, 1) = 3;
        img.at(1, 1) = 4;
        const Patch p = extract_patch(img, 0, 0, 2);
        CHECK(p.values == std::vector<double>{1, 2, 3, 4});
    }

    SECTION("origin clamped at the far corner matches a brute-force window copy")
    {
        std::mt19937 rng(11);
        const Image img = random_image(9, 7, 1, rng);
        const Patch p = extract_patch(img, img.width - 1, img.height - 1, 3);
        REQUIRE(p.x0 == img.width - 3);
        REQUIRE(p.y0 == img.height - 3);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i)
                CHECK(p.values[j * 3 + i] == img.at(p.x0 + i, p.y0 + j));
    }

    SECTION("side larger than the image is an error")
    {
        Image img(4, 4, 1);
        CHECK_THROWS(extract_patch(img, 0, 0, 5));
    }
}

TEST_CASE("aggregation")
{
    SECTION("single contributor reproduces the patch")
    {
        std::mt19937 rng(5);
        const Image img = random_image(6, 6, 1, rng);
        Accumulator acc(6, 6, 1);
        acc.add(extract_patch(img, 1, 2, 3), 1.0);
        const Image out = acc.finalize();
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i)
                CHECK(out.at(1 + i, 2 + j) == img.at(1 + i, 2 + j));
    }

    SECTION("identical values with different weights leave the mean unchanged")
    {
        Image img(4, 4, 1, 9.0);
        Accumulator acc(4, 4, 1);
        const Patch p = extract_patch(img, 0, 0, 4);
        acc.add(p, 1.0);
        acc.add(p, 3.0);
        const Image out = acc.finalize();
        for (double v : out.data)
            CHECK(v == 9.0);
    }

    SECTION("overlap of values 0 and 10 at equal weight finalizes to 5")
    {
        Accumulator acc(6, 4, 1);
        Image a(6, 4, 1, 0.0), b(6, 4, 1, 10.0);
        acc.add(extract_patch(a, 0, 0, 4), 1.0);
        acc.add(extract_patch(b, 2, 0, 4), 1.0);
        const Image out = acc.finalize();
        CHECK(out.at(2, 1) == 5.0);
        CHECK(out.at(3, 2) == 5.0);
        CHECK(out.at(0, 0) == 0.0);
        CHECK(out.at(5, 0) == 10.0);
    }

    SECTION("negative weight rejected")
    {
        Accumulator acc(4, 4, 1);
        Image img(4, 4, 1, 1.0);
        CHECK_THROWS(acc.add(extract_patch(img, 0, 0, 2), -1.0));
    }

    SECTION("extract then aggregate with weight 1 reproduces the source region")
    {
        std::mt19937 rng(17);
        const Image img = random_image(8, 8, 2, rng);
        Accumulator acc(8, 8, 2);
        acc.add(extract_patch(img, 3, 4, 4), 1.0);
        const Image out = acc.finalize();
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                for (int c = 0; c < 2; ++c)
                    CHECK(out.at(3 + i, 4 + j, c) == img.at(3 + i, 4 + j, c));
    }

    SECTION("insertion order changes the result only within reassociation error")
    {
        std::mt19937 rng(23);
        const int n = 500;
        std::vector<Patch> patches;
        for (int i = 0; i < n; ++i) {
            const Image img = random_image(16, 16, 1, rng);
            std::uniform_int_distribution<int> pos(0, 12);
            patches.push_back(extract_patch(img, pos(rng), pos(rng), 4));
        }
        Accumulator fwd(16, 16, 1), rev(16, 16, 1);
        for (int i = 0; i < n; ++i)
            fwd.add(patches[i], 1.0);
        for (int i = n - 1; i >= 0; --i)
            rev.add(patches[i], 1.0);
        const Image a = fwd.finalize(), b = rev.finalize();
        for (size_t i = 0; i < a.data.size(); ++i)
            CHECK(std::abs(a.data[i] - b.data[i]) < 1e-9);
    }

    SECTION("parallel merge equals sequential accumulation")
    {
        std::mt19937 rng(29);
        const Image img = random_image(12, 12, 1, rng);
        Accumulator whole(12, 12, 1), part1(12, 12, 1), part2(12, 12, 1);
        for (int i = 0; i < 8; ++i) {
            const Patch p = extract_patch(img, i, i / 2, 4);
            whole.add(p, 1.0);
            (i < 4 ? part1 : part2).add(p, 1.0);
        }
        part1.merge(part2);
        const Image a = whole.finalize(), b = part1.finalize();
        for (size_t i = 0; i < a.data.size(); ++i)
            CHECK(a.data[i] == Catch::Approx(b.data[i]).margin(1e-12));
    }
}

TEST_CASE("rmse")
{
    std::mt19937 rng(3);

    SECTION("identical images give zero")
    {
        const Image a = random_image(5, 5, 3, rng);
        CHECK(rmse(a, a) == 0.0);
    }

    SECTION("constant offset of 3 gives 3")
    {
        Image a(4, 4, 1, 0.0), b(4, 4, 1, 3.0);
        CHECK(rmse(a, b) == Catch::Approx(3.0));
    }

    SECTION("random pair matches an independent two-pass loop")
    {
        const Image a = random_image(4, 4, 1, rng);
        const Image b = random_image(4, 4, 1, rng);
        // independent oracle: explicit nested loops, two passes
        double acc = 0.0;
        int count = 0;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const double d = a.at(x, y) - b.at(x, y);
                acc += d * d;
                ++count;
            }
        const double expected = std::sqrt(acc / count);
        CHECK(rmse(a, b) == Catch::Approx(expected).epsilon(1e-12));
    }

    SECTION("symmetry and mismatch error")
    {
        const Image a = random_image(6, 3, 1, rng);
        const Image b = random_image(6, 3, 1, rng);
        CHECK(rmse(a, b) == Catch::Approx(rmse(b, a)));
        const Image c(5, 3, 1);
        CHECK_THROWS(rmse(a, c));
    }
}
