#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfaburst {

/// Planar-agnostic image container: row-major, channel-interleaved doubles.
/// range_hint is the nominal maximum value (255, 4095, 65535, ...); samples
/// themselves are unclamped reals until file write.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    double range_hint = 255.0;
    std::vector<double> data;

    Image() = default;

    Image(int w, int h, int c, double fill = 0.0, double range = 255.0)
        : width(w), height(h), channels(c), range_hint(range),
          data(static_cast<size_t>(w) * h * c, fill)
    {
        if (w <= 0 || h <= 0 || c <= 0)
            throw std::invalid_argument("Image: non-positive dimensions");
    }

    size_t size() const { return data.size(); }

    double& at(int x, int y, int c = 0)
    {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    double at(int x, int y, int c = 0) const
    {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    // Clamped (replicate-border) access.
    double at_clamped(int x, int y, int c = 0) const
    {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return at(x, y, c);
    }

    // Mirror-border access; preserves pixel parity on even-sized images,
    // which the Bayer indexing relies on.
    double at_mirrored(int x, int y, int c = 0) const
    {
        if (x < 0) x = -x;
        if (y < 0) y = -y;
        if (x >= width) x = 2 * width - 2 - x;
        if (y >= height) y = 2 * height - 2 - y;
        return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1), c);
    }

    bool same_shape(const Image& o) const
    {
        return width == o.width && height == o.height && channels == o.channels;
    }

    bool all_finite() const
    {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Ordered frames of uniform shape.
struct Sequence {
    std::vector<Image> frames;

    Sequence() = default;

    explicit Sequence(std::vector<Image> f) : frames(std::move(f)) { validate(); }

    void validate() const
    {
        if (frames.empty())
            throw std::invalid_argument("Sequence: empty");
        for (const Image& im : frames)
            if (!im.same_shape(frames.front()))
                throw std::invalid_argument("Sequence: non-uniform frame dimensions");
    }

    int size() const { return static_cast<int>(frames.size()); }
    const Image& operator[](int i) const { return frames[i]; }
    Image& operator[](int i) { return frames[i]; }
    int width() const { return frames.front().width; }
    int height() const { return frames.front().height; }
    int channels() const { return frames.front().channels; }
};

/// Square window of an image. Origin is the (clamped) top-left pixel.
struct Patch {
    int x0 = 0;
    int y0 = 0;
    int side = 0;
    int channels = 1;
    int frame_index = 0;
    std::vector<double> values;  // side*side*channels, row-major interleaved
};

inline int clamp_origin(int o, int side, int extent)
{
    return std::clamp(o, 0, extent - side);
}

/// Copies a side x side window. Out-of-range origins are clamped so the
/// patch always lies fully inside the image.
inline Patch extract_patch(const Image& img, int x, int y, int side, int frame_index = 0)
{
    if (side <= 0 || side > img.width || side > img.height)
        throw std::invalid_argument("extract_patch: side exceeds image dimensions");
    Patch p;
    p.x0 = clamp_origin(x, side, img.width);
    p.y0 = clamp_origin(y, side, img.height);
    p.side = side;
    p.channels = img.channels;
    p.frame_index = frame_index;
    p.values.resize(static_cast<size_t>(side) * side * img.channels);
    size_t q = 0;
    for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i)
            for (int c = 0; c < img.channels; ++c)
                p.values[q++] = img.at(p.x0 + i, p.y0 + j, c);
    return p;
}

/// Weighted running sums for overlapping-patch aggregation.
/// Single writer; parallel use means one Accumulator per worker plus merge().
struct Accumulator {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> sum;
    std::vector<double> weight;

    Accumulator() = default;

    Accumulator(int w, int h, int c)
        : width(w), height(h), channels(c),
          sum(static_cast<size_t>(w) * h * c, 0.0),
          weight(static_cast<size_t>(w) * h * c, 0.0)
    {
    }

    void add(const Patch& p, double w)
    {
        add_values(p.x0, p.y0, p.side, p.channels, p.values.data(), w);
    }

    void add_values(int x0, int y0, int side, int ch, const double* vals, double w)
    {
        if (w < 0.0)
            throw std::invalid_argument("Accumulator: negative weight");
        if (ch != channels)
            throw std::invalid_argument("Accumulator: channel mismatch");
        size_t q = 0;
        for (int j = 0; j < side; ++j)
            for (int i = 0; i < side; ++i)
                for (int c = 0; c < ch; ++c) {
                    size_t idx = (static_cast<size_t>(y0 + j) * width + (x0 + i)) * ch + c;
                    sum[idx] += w * vals[q];
                    weight[idx] += w;
                    ++q;
                }
    }

    void merge(const Accumulator& o)
    {
        for (size_t i = 0; i < sum.size(); ++i) {
            sum[i] += o.sum[i];
            weight[i] += o.weight[i];
        }
    }

    // sum/weight where weight > 0; elsewhere the fallback value (or 0).
    Image finalize(const Image* fallback = nullptr, double range = 255.0) const
    {
        Image out(width, height, channels, 0.0, fallback ? fallback->range_hint : range);
        for (size_t i = 0; i < sum.size(); ++i)
            out.data[i] = weight[i] > 0.0 ? sum[i] / weight[i]
                                          : (fallback ? fallback->data[i] : 0.0);
        return out;
    }
};

inline double rmse(const Image& a, const Image& b)
{
    if (!a.same_shape(b))
        throw std::invalid_argument("rmse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.data.size()));
}

}  // namespace cfaburst
