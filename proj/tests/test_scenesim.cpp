#include <doctest.h>

#include "veriforest/dataset.hpp"
#include "veriforest/scenesim.hpp"

using namespace veriforest;

namespace {
WorldConfig small_config() {
    WorldConfig c;
    c.gridSize = 4;
    c.parcelPixels = 32;
    c.resolutionRatio = 8;
    c.timesteps = 3;
    c.seed = 42;
    return c;
}
} // namespace

TEST_CASE("saturated and empty cover ranges") {
    WorldConfig c = small_config();
    c.coverMin = c.coverMax = 1.0;
    c.loggingProb = 0.0;
    World w = generate_world(c);
    for (int i = 0; i < c.gridSize; ++i)
        for (int j = 0; j < c.gridSize; ++j)
            for (int t = 0; t < c.timesteps; ++t) CHECK(forest_cover(w, i, j, t) == 1.0);

    c.coverMin = c.coverMax = 0.0;
    World w0 = generate_world(c);
    for (int i = 0; i < c.gridSize; ++i)
        for (int j = 0; j < c.gridSize; ++j) CHECK(forest_cover(w0, i, j, 0) == 0.0);
    // pure soil render: red channel mean above green
    Raster r = render_drone(w0, 0, 0, 0, 1);
    double red = 0, green = 0;
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) {
            red += r.at(y, x, 0);
            green += r.at(y, x, 1);
        }
    CHECK(red > green);
}

TEST_CASE("world generation is deterministic") {
    WorldConfig c = small_config();
    c.loggingProb = 0.5;
    World a = generate_world(c);
    World b = generate_world(c);
    for (size_t p = 0; p < a.mask.size(); ++p)
        for (int t = 0; t < c.timesteps; ++t) CHECK(a.mask[p][t] == b.mask[p][t]);
}

TEST_CASE("forest cover equals the brute-force mask count") {
    WorldConfig c = small_config();
    World w = generate_world(c);
    for (int i = 0; i < c.gridSize; ++i)
        for (int j = 0; j < c.gridSize; ++j)
            for (int t = 0; t < c.timesteps; ++t) {
                const auto& m = w.mask[w.parcel_index(i, j)][t];
                long n = 0;
                for (uint8_t v : m) n += v;
                CHECK(forest_cover(w, i, j, t) ==
                      static_cast<double>(n) / static_cast<double>(m.size()));
            }
}

namespace {

// independent replication of the cover-target rule: bilinear value noise on a
// 4-parcel lattice, mapped into [coverMin, coverMax]
double expected_cover_target(const WorldConfig& c, int i, int j) {
    auto corner = [&](int ci, int cj) {
        return SplitMix64(derive_seed(c.seed, ci, cj, kCoverTarget)).uniform();
    };
    double fi = (i % 4) / 4.0, fj = (j % 4) / 4.0;
    double top = corner(i / 4, j / 4) * (1 - fj) + corner(i / 4, j / 4 + 1) * fj;
    double bot = corner(i / 4 + 1, j / 4) * (1 - fj) + corner(i / 4 + 1, j / 4 + 1) * fj;
    return c.coverMin + (c.coverMax - c.coverMin) * (top * (1 - fi) + bot * fi);
}

} // namespace

TEST_CASE("initial cover lands within 2% of its seeded target") {
    WorldConfig c = small_config();
    c.coverMin = 0.3;
    c.coverMax = 0.9;
    World w = generate_world(c);
    for (int i = 0; i < c.gridSize; ++i)
        for (int j = 0; j < c.gridSize; ++j) {
            double target = expected_cover_target(c, i, j);
            CHECK(cover_target(c, i, j) == target);
            CHECK(target >= c.coverMin);
            CHECK(target <= c.coverMax);
            CHECK(std::abs(forest_cover(w, i, j, 0) - target) <= 0.02);
        }
}

TEST_CASE("cover targets are spatially correlated across the grid") {
    // neighbouring parcels share lattice corners, so the mean gap to the best
    // (highest-cover) neighbour is well below the i.i.d.-uniform expectation
    WorldConfig c;
    c.gridSize = 8;
    c.parcelPixels = 8;
    c.resolutionRatio = 1;
    c.timesteps = 2;
    c.coverMin = 0.3;
    c.coverMax = 0.9;
    double gapSum = 0.0;
    int n = 0;
    for (int i = 0; i < c.gridSize; ++i)
        for (int j = 0; j < c.gridSize; ++j) {
            double own = cover_target(c, i, j), best = 0.0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    int ni = i + di, nj = j + dj;
                    if (ni < 0 || nj < 0 || ni >= c.gridSize || nj >= c.gridSize) continue;
                    best = std::max(best, cover_target(c, ni, nj));
                }
            gapSum += std::max(0.0, best - own);
            ++n;
        }
    // i.i.d. uniform targets over a 0.6-wide range average a ~0.17 gap here
    CHECK(gapSum / n < 0.10);
}

TEST_CASE("deforestation is monotone") {
    WorldConfig c = small_config();
    c.loggingProb = 0.8;
    World w = generate_world(c);
    for (int i = 0; i < c.gridSize; ++i)
        for (int j = 0; j < c.gridSize; ++j)
            for (int t = 1; t < c.timesteps; ++t) {
                CHECK(forest_cover(w, i, j, t) <= forest_cover(w, i, j, t - 1));
                // pixel-level subset, not just the aggregate
                const auto& prev = w.mask[w.parcel_index(i, j)][t - 1];
                const auto& cur = w.mask[w.parcel_index(i, j)][t];
                for (size_t k = 0; k < cur.size(); ++k)
                    if (cur[k]) CHECK(prev[k]);
            }
}

TEST_CASE("drone render: green dominance on forest, determinism, jitter variation") {
    WorldConfig c = small_config();
    c.coverMin = c.coverMax = 1.0;
    World w = generate_world(c);
    Raster r = render_drone(w, 1, 1, 0, 5);
    double red = 0, green = 0;
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) {
            red += r.at(y, x, 0);
            green += r.at(y, x, 1);
        }
    CHECK(green > red);

    Raster r2 = render_drone(w, 1, 1, 0, 5);
    CHECK(r.data == r2.data);

    Raster r3 = render_drone(w, 1, 1, 0, 6);
    CHECK(mse(r, r3) > 0.0);
    r.validate();
    r3.validate();
}

TEST_CASE("parcel tint: per-location signature, constant over time") {
    WorldConfig c = small_config();
    c.coverMin = c.coverMax = 1.0;
    c.loggingProb = 0.0;
    c.droneNoise = 0.0;
    World w = generate_world(c);

    // different parcels with identical (all-forest) masks render differently
    Raster a = render_drone(w, 0, 0, 0, kCanonicalJitterSeed);
    Raster b = render_drone(w, 1, 1, 0, kCanonicalJitterSeed);
    CHECK(mse(a, b) > 0.0);
    // the tint does not drift between timesteps
    Raster a1 = render_drone(w, 0, 0, 1, kCanonicalJitterSeed);
    CHECK(a.data == a1.data);

    // amplitude zero restores identical renders for identical masks
    WorldConfig c0 = c;
    c0.parcelTint = 0.0;
    World w0 = generate_world(c0);
    Raster a0 = render_drone(w0, 0, 0, 0, kCanonicalJitterSeed);
    Raster b0 = render_drone(w0, 1, 1, 0, kCanonicalJitterSeed);
    CHECK(a0.data == b0.data);
}

TEST_CASE("satellite render geometry and degenerate parameters") {
    WorldConfig c = small_config();
    World w = generate_world(c);
    Raster sat = render_satellite(w, 0, 1, 1);
    CHECK(sat.height == c.parcelPixels / c.resolutionRatio);
    CHECK(sat.width == sat.height);

    // s = 1, noise 0: exactly the box-resample of the canonical drone render
    WorldConfig ci = c;
    ci.satIntensity = 1.0;
    ci.satNoise = 0.0;
    World wi = generate_world(ci);
    Raster canonical = render_drone(wi, 0, 1, 1, kCanonicalJitterSeed);
    Raster expect = resample(canonical, sat.height, sat.width, ResampleMode::box);
    Raster got = render_satellite(wi, 0, 1, 1);
    CHECK(got.data == expect.data);

    // s = 0.8, noise 0: mean scales by exactly 0.8
    WorldConfig cs = c;
    cs.satNoise = 0.0;
    cs.satIntensity = 0.8;
    World ws = generate_world(cs);
    Raster can2 = render_drone(ws, 2, 2, 0, kCanonicalJitterSeed);
    Raster sat2 = render_satellite(ws, 2, 2, 0);
    double mDrone = 0, mSat = 0;
    for (double v : can2.data) mDrone += v;
    for (double v : sat2.data) mSat += v;
    mDrone /= can2.data.size();
    mSat /= sat2.data.size();
    CHECK(mSat == doctest::Approx(0.8 * mDrone).epsilon(1e-9));
}

TEST_CASE("out-of-range indices are rejected") {
    World w = generate_world(small_config());
    CHECK_THROWS_AS(forest_cover(w, -1, 0, 0), std::out_of_range);
    CHECK_THROWS_AS(forest_cover(w, 0, 4, 0), std::out_of_range);
    CHECK_THROWS_AS(forest_cover(w, 0, 0, 3), std::out_of_range);
    CHECK_THROWS_AS(render_drone(w, 9, 0, 0, 1), std::out_of_range);
}

TEST_CASE("build_dataset counts, claims, and manifest covers") {
    WorldConfig c = small_config();
    c.gridSize = 2;
    c.timesteps = 2;
    World w = generate_world(c);
    Dataset ds = build_dataset(w, 99);
    CHECK(ds.submissions.size() == 8);
    CHECK(ds.satellites.size() == 8);
    for (const auto& s : ds.submissions) {
        CHECK(s.label == "truthful");
        CHECK(s.prov.srcI == s.claimedI);
        CHECK(s.prov.srcJ == s.claimedJ);
        CHECK(s.prov.srcT == s.claimedT);
        CHECK(s.cover == forest_cover(w, s.claimedI, s.claimedJ, s.claimedT));
    }
}

TEST_CASE("dataset save/load round trip keeps manifest bytes stable") {
    WorldConfig c = small_config();
    c.gridSize = 2;
    c.timesteps = 2;
    World w = generate_world(c);
    Dataset ds = build_dataset(w, 7);
    auto dir = std::filesystem::temp_directory_path() / "veriforest_ds_test";
    std::filesystem::remove_all(dir);
    save_dataset(ds, dir);
    Dataset back = load_dataset(dir);
    CHECK(back.submissions.size() == ds.submissions.size());
    CHECK(back.world.seed == c.seed);
    // manifest regenerated from the loaded dataset matches byte for byte
    CHECK(manifest_string(back) == manifest_string(ds));
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
    WorldConfig c = small_config();
    c.parcelPixels = 30; // not divisible by 8
    CHECK_THROWS_AS(generate_world(c), std::invalid_argument);
    c = small_config();
    c.coverMin = 0.8;
    c.coverMax = 0.2;
    CHECK_THROWS_AS(generate_world(c), std::invalid_argument);
}
