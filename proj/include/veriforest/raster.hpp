#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace veriforest {

// H x W x 3 image, row-major [y][x][channel], values in [0, 1].
struct Raster {
    int height = 0;
    int width = 0;
    static constexpr int channels = 3;
    std::vector<double> data;

    Raster() = default;
    Raster(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w * channels, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }

    void validate() const {
        if (height < 1 || width < 1)
            throw std::invalid_argument("Raster: non-positive dimensions");
        if (data.size() != static_cast<size_t>(height) * width * channels)
            throw std::invalid_argument("Raster: data length mismatch");
        for (double v : data)
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw std::invalid_argument("Raster: value outside [0,1]");
    }
};

inline double mse(const Raster& a, const Raster& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("mse: dimension mismatch (" +
                                    std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    " vs " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width) + ")");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

enum class ResampleMode { box, nearest };

inline Raster resample(const Raster& img, int outH, int outW, ResampleMode mode) {
    if (outH < 1 || outW < 1)
        throw std::invalid_argument("resample: output dims must be >= 1");
    if (outH == img.height && outW == img.width) return img;

    Raster out(outH, outW);
    if (mode == ResampleMode::box) {
        if (img.height % outH != 0 || img.width % outW != 0)
            throw std::invalid_argument("resample: box requires integral downsample ratio");
        const int ry = img.height / outH;
        const int rx = img.width / outW;
        const double inv = 1.0 / (ry * rx);
        for (int y = 0; y < outH; ++y)
            for (int x = 0; x < outW; ++x)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int dy = 0; dy < ry; ++dy)
                        for (int dx = 0; dx < rx; ++dx)
                            acc += img.at(y * ry + dy, x * rx + dx, c);
                    out.at(y, x, c) = acc * inv;
                }
    } else {
        for (int y = 0; y < outH; ++y) {
            int sy = static_cast<int>((static_cast<long long>(y) * img.height) / outH);
            for (int x = 0; x < outW; ++x) {
                int sx = static_cast<int>((static_cast<long long>(x) * img.width) / outW);
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
            }
        }
    }
    return out;
}

// Per-channel zero mean / unit std (population). Constant channels map to zero.
// Output layout matches the raster's row-major [y][x][c].
inline std::vector<double> standardize(const Raster& img) {
    const int n = img.height * img.width;
    std::vector<double> out(img.data.size());
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += img.data[static_cast<size_t>(i) * 3 + c];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = img.data[static_cast<size_t>(i) * 3 + c] - mean;
            var += d * d;
        }
        var /= n;
        // near-zero variance counts as constant (guards accumulation residue)
        double sd = std::sqrt(var);
        if (sd < 1e-12) sd = 0.0;
        for (int i = 0; i < n; ++i) {
            size_t k = static_cast<size_t>(i) * 3 + c;
            out[k] = sd == 0.0 ? 0.0 : (img.data[k] - mean) / sd;
        }
    }
    return out;
}

// Resamples to an edge-length square: box when downsampling (integral ratio),
// nearest when upsampling. Errors on non-integral ratios.
inline Raster align_to(const Raster& img, int edge) {
    if (img.height != img.width)
        throw std::invalid_argument("align_to: expected square raster");
    if (img.height == edge) return img;
    if (img.height > edge) {
        if (img.height % edge != 0)
            throw std::invalid_argument("align_to: non-integral downsample ratio");
        return resample(img, edge, edge, ResampleMode::box);
    }
    if (edge % img.height != 0)
        throw std::invalid_argument("align_to: non-integral upsample ratio");
    return resample(img, edge, edge, ResampleMode::nearest);
}

} // namespace veriforest
