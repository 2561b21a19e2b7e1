#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "veriforest/raster.hpp"
#include "veriforest/rng.hpp"

namespace veriforest {

struct WorldConfig {
    int gridSize = 8;        // parcels per side
    int parcelPixels = 64;   // drone-view edge length
    int resolutionRatio = 8; // drone-to-satellite linear ratio
    int timesteps = 3;
    double coverMin = 0.3;
    double coverMax = 0.9;
    double loggingProb = 0.5;
    double loggingFracMin = 0.3;
    double loggingFracMax = 0.6;
    uint64_t seed = 42;

    // rendering
    double droneNoise = 0.05;   // per-pixel uniform noise amplitude
    double satNoise = 0.03;     // satellite sensor noise amplitude
    double satIntensity = 0.8;  // fixed satellite brightness factor
    double jitterMin = 0.6;     // per-capture intensity multiplier range
    double jitterMax = 1.5;
    // Per-parcel forest-color offset amplitude: each parcel gets a seeded,
    // time-constant tint of its forest base color (species composition varies
    // by location). Gives every parcel an appearance signature that is
    // independent of its forest cover. Must stay below 0.13 so forest pixels
    // remain green-dominant for every draw.
    double parcelTint = 0.10;

    void validate() const {
        if (gridSize < 1) throw std::invalid_argument("WorldConfig: gridSize < 1");
        if (timesteps < 2) throw std::invalid_argument("WorldConfig: timesteps < 2");
        if (parcelPixels < 1 || resolutionRatio < 1 ||
            parcelPixels % resolutionRatio != 0)
            throw std::invalid_argument(
                "WorldConfig: parcelPixels must be divisible by resolutionRatio");
        if (!(0.0 <= coverMin && coverMin <= coverMax && coverMax <= 1.0))
            throw std::invalid_argument("WorldConfig: bad cover range");
        if (loggingProb < 0.0 || loggingProb > 1.0)
            throw std::invalid_argument("WorldConfig: loggingProb outside [0,1]");
        if (!(0.0 <= loggingFracMin && loggingFracMin <= loggingFracMax &&
              loggingFracMax <= 1.0))
            throw std::invalid_argument("WorldConfig: bad logging fraction range");
        // 0.13 keeps green strictly dominant on forest pixels for every tint
        if (!(0.0 <= parcelTint && parcelTint < 0.13))
            throw std::invalid_argument("WorldConfig: parcelTint outside [0, 0.13)");
    }
};

struct World {
    WorldConfig config;
    // mask[parcelIndex][t] -> parcelPixels^2 occupancy bytes
    std::vector<std::vector<std::vector<uint8_t>>> mask;

    int parcel_index(int i, int j) const { return i * config.gridSize + j; }
    void check_indices(int i, int j, int t) const {
        if (i < 0 || i >= config.gridSize || j < 0 || j >= config.gridSize)
            throw std::out_of_range("World: parcel (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") out of range");
        if (t < 0 || t >= config.timesteps)
            throw std::out_of_range("World: timestep " + std::to_string(t) + " out of range");
    }
};

namespace detail {

// Seeded value noise: uniform lattice every 8 px, bilinear interpolation,
// then one pass of the fixed 5x5 binomial kernel (clamp-to-edge).
inline std::vector<double> smooth_field(int edge, uint64_t seed) {
    const int step = 8;
    const int lat = edge / step + 2;
    SplitMix64 g(seed);
    std::vector<double> lattice(static_cast<size_t>(lat) * lat);
    for (auto& v : lattice) v = g.uniform();

    std::vector<double> field(static_cast<size_t>(edge) * edge);
    for (int y = 0; y < edge; ++y) {
        double fy = static_cast<double>(y) / step;
        int y0 = static_cast<int>(fy);
        double ty = fy - y0;
        for (int x = 0; x < edge; ++x) {
            double fx = static_cast<double>(x) / step;
            int x0 = static_cast<int>(fx);
            double tx = fx - x0;
            double v00 = lattice[static_cast<size_t>(y0) * lat + x0];
            double v01 = lattice[static_cast<size_t>(y0) * lat + x0 + 1];
            double v10 = lattice[static_cast<size_t>(y0 + 1) * lat + x0];
            double v11 = lattice[static_cast<size_t>(y0 + 1) * lat + x0 + 1];
            field[static_cast<size_t>(y) * edge + x] =
                (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        }
    }

    static constexpr std::array<double, 5> k = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16,
                                                1.0 / 16};
    auto clampi = [edge](int v) { return v < 0 ? 0 : (v >= edge ? edge - 1 : v); };
    std::vector<double> tmp(field.size());
    for (int y = 0; y < edge; ++y)
        for (int x = 0; x < edge; ++x) {
            double acc = 0.0;
            for (int d = -2; d <= 2; ++d)
                acc += k[d + 2] * field[static_cast<size_t>(y) * edge + clampi(x + d)];
            tmp[static_cast<size_t>(y) * edge + x] = acc;
        }
    for (int y = 0; y < edge; ++y)
        for (int x = 0; x < edge; ++x) {
            double acc = 0.0;
            for (int d = -2; d <= 2; ++d)
                acc += k[d + 2] * tmp[static_cast<size_t>(clampi(y + d)) * edge + x];
            field[static_cast<size_t>(y) * edge + x] = acc;
        }
    return field;
}

inline double mask_cover(const std::vector<uint8_t>& m) {
    long n = 0;
    for (uint8_t v : m) n += v;
    return static_cast<double>(n) / static_cast<double>(m.size());
}

// Bisection on the threshold so the achieved cover lands within 2% of target.
inline std::vector<uint8_t> threshold_to_cover(const std::vector<double>& field,
                                               double target, int parcelI, int parcelJ) {
    constexpr double kTol = 0.02;
    auto coverAt = [&](double th) {
        long n = 0;
        for (double v : field) n += v >= th;
        return static_cast<double>(n) / static_cast<double>(field.size());
    };
    double lo = *std::min_element(field.begin(), field.end()) - 1e-9;
    double hi = *std::max_element(field.begin(), field.end()) + 1e-9;
    for (int it = 0; it < 64; ++it) {
        double mid = 0.5 * (lo + hi);
        if (coverAt(mid) >= target)
            lo = mid;
        else
            hi = mid;
    }
    double th = std::abs(coverAt(lo) - target) <= std::abs(coverAt(hi) - target) ? lo : hi;
    if (std::abs(coverAt(th) - target) > kTol)
        throw std::runtime_error("generate_world: cover target " + std::to_string(target) +
                                 " infeasible for parcel (" + std::to_string(parcelI) + "," +
                                 std::to_string(parcelJ) + ")");
    std::vector<uint8_t> m(field.size());
    for (size_t i = 0; i < field.size(); ++i) m[i] = field[i] >= th;
    return m;
}

// Clears an axis-aligned rectangle grown from a random forest pixel until the
// forest count inside is nearest to the removal target.
inline void apply_logging(std::vector<uint8_t>& m, int edge, double frac, SplitMix64& g) {
    long forest = 0;
    for (uint8_t v : m) forest += v;
    if (forest == 0) return;
    long target = std::lround(frac * static_cast<double>(forest));
    if (target <= 0) return;

    long pick = static_cast<long>(g.below(static_cast<uint64_t>(forest)));
    int sy = 0, sx = 0;
    for (int i = 0, seen = 0; i < edge * edge; ++i) {
        if (!m[i]) continue;
        if (seen++ == pick) {
            sy = i / edge;
            sx = i % edge;
            break;
        }
    }

    auto countIn = [&](int y0, int x0, int y1, int x1) {
        long n = 0;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) n += m[static_cast<size_t>(y) * edge + x];
        return n;
    };

    int y0 = sy, y1 = sy, x0 = sx, x1 = sx;
    long cur = countIn(y0, x0, y1, x1);
    long prev = cur;
    int py0 = y0, py1 = y1, px0 = x0, px1 = x1;
    int side = 0;
    while (cur < target) {
        bool grew = false;
        for (int attempt = 0; attempt < 4 && !grew; ++attempt) {
            int s = (side + attempt) % 4;
            if (s == 0 && x1 + 1 < edge) { px0 = x0; px1 = x1; py0 = y0; py1 = y1; prev = cur; ++x1; grew = true; }
            else if (s == 1 && y1 + 1 < edge) { px0 = x0; px1 = x1; py0 = y0; py1 = y1; prev = cur; ++y1; grew = true; }
            else if (s == 2 && x0 > 0) { px0 = x0; px1 = x1; py0 = y0; py1 = y1; prev = cur; --x0; grew = true; }
            else if (s == 3 && y0 > 0) { px0 = x0; px1 = x1; py0 = y0; py1 = y1; prev = cur; --y0; grew = true; }
        }
        if (!grew) break; // whole parcel reached
        side = (side + 1) % 4;
        cur = countIn(y0, x0, y1, x1);
    }
    // nearest achievable: maybe the previous rectangle was closer
    if (std::abs(prev - target) < std::abs(cur - target)) {
        y0 = py0; y1 = py1; x0 = px0; x1 = px1;
    }
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m[static_cast<size_t>(y) * edge + x] = 0;
}

} // namespace detail

// Per-parcel initial cover target: a smooth grid-level field (bilinear value
// noise on a lattice with 4-parcel spacing) mapped into [coverMin, coverMax].
// Adjacent parcels get similar targets, modelling regional terrain correlation;
// raw per-parcel draws would give neighbours wildly different cover and make
// location swaps trivially detectable from cover alone.
inline double cover_target(const WorldConfig& cfg, int i, int j) {
    auto corner = [&](int ci, int cj) {
        return SplitMix64(derive_seed(cfg.seed, ci, cj, kCoverTarget)).uniform();
    };
    constexpr int kSpacing = 4;
    const int i0 = i / kSpacing, j0 = j / kSpacing;
    const double fi = static_cast<double>(i % kSpacing) / kSpacing;
    const double fj = static_cast<double>(j % kSpacing) / kSpacing;
    const double top = corner(i0, j0) * (1.0 - fj) + corner(i0, j0 + 1) * fj;
    const double bot = corner(i0 + 1, j0) * (1.0 - fj) + corner(i0 + 1, j0 + 1) * fj;
    const double v = top * (1.0 - fi) + bot * fi;
    return cfg.coverMin + (cfg.coverMax - cfg.coverMin) * v;
}

inline World generate_world(const WorldConfig& cfg) {
    cfg.validate();
    World w;
    w.config = cfg;
    const int G = cfg.gridSize, P = cfg.parcelPixels, T = cfg.timesteps;
    w.mask.resize(static_cast<size_t>(G) * G);
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) {
            auto& parcel = w.mask[w.parcel_index(i, j)];
            parcel.resize(T);

            double target = cover_target(cfg, i, j);
            auto field = detail::smooth_field(P, derive_seed(cfg.seed, i, j, kForestField));
            parcel[0] = detail::threshold_to_cover(field, target, i, j);

            for (int t = 1; t < T; ++t) {
                parcel[t] = parcel[t - 1];
                SplitMix64 eg(derive_seed(cfg.seed, i, j, t, kLoggingEvent));
                if (eg.uniform() < cfg.loggingProb) {
                    double frac = eg.uniform(cfg.loggingFracMin, cfg.loggingFracMax);
                    SplitMix64 rg(derive_seed(cfg.seed, i, j, t, kLoggingRect));
                    detail::apply_logging(parcel[t], P, frac, rg);
                }
            }
        }
    return w;
}

inline double forest_cover(const World& w, int i, int j, int t) {
    w.check_indices(i, j, t);
    return detail::mask_cover(w.mask[w.parcel_index(i, j)][t]);
}

// render_drone with this seed uses intensity multiplier exactly 1.0;
// render_satellite is defined relative to that canonical capture.
constexpr uint64_t kCanonicalJitterSeed = 0xffffffffffffffffULL;

inline Raster render_drone(const World& w, int i, int j, int t, uint64_t jitterSeed) {
    w.check_indices(i, j, t);
    const auto& cfg = w.config;
    const auto& m = w.mask[w.parcel_index(i, j)][t];
    const int P = cfg.parcelPixels;

    double mult = 1.0;
    if (jitterSeed != kCanonicalJitterSeed) {
        SplitMix64 jg(derive_seed(cfg.seed, i, j, t, kCaptureJitter, jitterSeed));
        mult = jg.uniform(cfg.jitterMin, cfg.jitterMax);
    }
    SplitMix64 ng(derive_seed(cfg.seed, i, j, t, kDroneNoise, jitterSeed));

    static constexpr std::array<double, 3> kForest = {0.06, 0.32, 0.08};
    static constexpr std::array<double, 3> kSoil = {0.42, 0.30, 0.18};

    // location signature: seeded per-parcel forest tint, constant across time
    SplitMix64 tintG(derive_seed(cfg.seed, i, j, kParcelTint));
    std::array<double, 3> forest = kForest;
    for (auto& v : forest) v += cfg.parcelTint * (2.0 * tintG.uniform() - 1.0);

    Raster out(P, P);
    for (int y = 0; y < P; ++y)
        for (int x = 0; x < P; ++x) {
            const auto& base = m[static_cast<size_t>(y) * P + x] ? forest : kSoil;
            for (int c = 0; c < 3; ++c) {
                double v = base[c] + cfg.droneNoise * (2.0 * ng.uniform() - 1.0);
                out.at(y, x, c) = std::clamp(mult * v, 0.0, 1.0);
            }
        }
    return out;
}

inline Raster render_satellite(const World& w, int i, int j, int t) {
    w.check_indices(i, j, t);
    const auto& cfg = w.config;
    Raster drone = render_drone(w, i, j, t, kCanonicalJitterSeed);
    int edge = cfg.parcelPixels / cfg.resolutionRatio;
    Raster sat = resample(drone, edge, edge, ResampleMode::box);
    SplitMix64 ng(derive_seed(cfg.seed, i, j, t, kSatelliteNoise));
    for (auto& v : sat.data)
        v = std::clamp(v * cfg.satIntensity + cfg.satNoise * (2.0 * ng.uniform() - 1.0), 0.0,
                       1.0);
    return sat;
}

} // namespace veriforest
