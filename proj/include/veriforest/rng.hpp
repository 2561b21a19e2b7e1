#pragma once

#include <cstdint>

namespace veriforest {

// splitmix64 (Steele, Lea & Flood 2014). Used both as the pipeline's
// uniform generator and as the mixer for deriving per-purpose seed streams,
// so datasets are byte-identical across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform double in [0, 1) with 53 bits of mantissa
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    uint64_t state_;
};

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
    SplitMix64 g(h ^ (v + 0x9e3779b97f4a7c15ULL));
    return g.next();
}

// Derives an independent seed stream from a root seed and an arbitrary
// tuple of integer tags (parcel coordinates, timestep, purpose id, ...).
template <class... Ts>
uint64_t derive_seed(uint64_t root, Ts... parts) {
    uint64_t h = root;
    ((h = hash_combine(h, static_cast<uint64_t>(parts))), ...);
    return h;
}

// Purpose tags for seed-stream splitting.
enum StreamPurpose : uint64_t {
    kCoverTarget = 1,
    kForestField = 2,
    kLoggingEvent = 3,
    kLoggingRect = 4,
    kDroneNoise = 5,
    kCaptureJitter = 6,
    kSatelliteNoise = 7,
    kCaptureSeed = 8,
    kAttackCapture = 9,
    kParamInit = 10,
    kShuffle = 11,
    kTripletSampling = 12,
    kGradCheck = 13,
    kParcelTint = 14,
};

} // namespace veriforest
