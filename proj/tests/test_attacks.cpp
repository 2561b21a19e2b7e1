#include <doctest.h>

#include <cmath>

#include "veriforest/attacks.hpp"

using namespace veriforest;

namespace {

PgdObjective pixel_sum_objective() {
    PgdObjective o;
    o.value = [](const Raster& x) {
        double s = 0;
        for (double v : x.data) s += v;
        return s;
    };
    o.grad = [](const Raster& x) { return Raster(x.height, x.width, 1.0); };
    return o;
}

WorldConfig tiny_config(int gridSize = 2) {
    WorldConfig c;
    c.gridSize = gridSize;
    c.parcelPixels = 16;
    c.resolutionRatio = 8;
    c.timesteps = 3;
    c.seed = 13;
    return c;
}

Raster random_raster(int edge, uint64_t seed) {
    SplitMix64 g(seed);
    Raster r(edge, edge);
    for (auto& v : r.data) v = g.uniform();
    return r;
}

const Submission& find_sub(const Dataset& ds, int i, int j, int t,
                           const std::string& label = "truthful") {
    for (const auto& s : ds.submissions)
        if (s.claimedI == i && s.claimedJ == j && s.claimedT == t && s.label == label)
            return s;
    throw std::runtime_error("fixture: submission not found");
}

CoverRegressor quick_regressor(const Dataset& ds, int epochs = 3) {
    RegressorTrainConfig rc;
    rc.epochs = epochs;
    return train_cover_regressor(ds, rc);
}

} // namespace

TEST_CASE("pgd: zero budget returns the start point") {
    Raster x0 = random_raster(6, 3);
    Raster out = pgd_attack(pixel_sum_objective(), x0, 0.0, 0.1, 5, PgdDirection::maximize);
    CHECK(out.data == x0.data);
}

TEST_CASE("pgd: one maximizing step on the pixel-sum objective") {
    Raster x0(4, 4, 0.5);
    Raster out = pgd_attack(pixel_sum_objective(), x0, 0.1, 0.1, 1, PgdDirection::maximize);
    for (double v : out.data) CHECK(v == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("pgd: the [0,1] clip binds before the epsilon ball") {
    Raster x0(4, 4, 0.95);
    Raster out = pgd_attack(pixel_sum_objective(), x0, 0.1, 0.2, 1, PgdDirection::maximize);
    for (double v : out.data) CHECK(v == 1.0);
}

TEST_CASE("pgd: minimize walks the other way") {
    Raster x0(4, 4, 0.5);
    Raster out = pgd_attack(pixel_sum_objective(), x0, 0.1, 0.1, 1, PgdDirection::minimize);
    for (double v : out.data) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("pgd: feasibility is exact on a real network objective") {
    nn::Network net = nn::make_cover_regressor_net(16);
    nn::Vec params = net.init_params(3);
    PgdObjective obj = scalar_net_objective(net, params);
    const double eps = 8.0 / 255.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Raster x0 = random_raster(16, seed);
        Raster out = pgd_attack(obj, x0, eps, 2.0 / 255.0, 10, PgdDirection::maximize);
        for (size_t i = 0; i < out.data.size(); ++i) {
            CHECK(std::abs(out.data[i] - x0.data[i]) <= eps);
            CHECK(out.data[i] >= 0.0);
            CHECK(out.data[i] <= 1.0);
        }
    }
}

TEST_CASE("pgd: parameter validation") {
    Raster x0(2, 2, 0.5);
    CHECK_THROWS_AS(pgd_attack(pixel_sum_objective(), x0, -0.1, 0.1, 1, PgdDirection::maximize),
                    std::invalid_argument);
    CHECK_THROWS_AS(pgd_attack(pixel_sum_objective(), x0, 0.1, 0.0, 1, PgdDirection::maximize),
                    std::invalid_argument);
    CHECK_THROWS_AS(pgd_attack(pixel_sum_objective(), x0, 0.1, 0.1, -1, PgdDirection::maximize),
                    std::invalid_argument);
}

TEST_CASE("wrong location: picks the highest-cover neighbor, claim unchanged") {
    World w = generate_world(tiny_config(3));
    Dataset ds = build_dataset(w, 5);
    // center parcel (1,1): force neighbor covers so (0,1) wins
    ds.covers[{1, 1, 0}] = 0.5;
    ds.covers[{0, 1, 0}] = 0.8;
    ds.covers[{1, 0, 0}] = 0.3;
    ds.covers[{1, 2, 0}] = 0.3;
    ds.covers[{2, 1, 0}] = 0.3;
    Submission a = attack_wrong_location(w, ds, find_sub(ds, 1, 1, 0), 77);
    CHECK(a.label == "wrong_location");
    CHECK(a.claimedI == 1);
    CHECK(a.claimedJ == 1);
    CHECK(a.prov.srcI == 0);
    CHECK(a.prov.srcJ == 1);
    CHECK(a.cover == 0.8);
    // the image really is a render of the source parcel
    CHECK(a.image.data == render_drone(w, 0, 1, 0, a.jitterSeed).data);
}

TEST_CASE("wrong location: forced choice and row-major tie-break") {
    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    // corner (0,0) has neighbors (0,1) and (1,0); make (1,0) clearly best
    ds.covers[{0, 1, 1}] = 0.1;
    ds.covers[{1, 0, 1}] = 0.9;
    Submission a = attack_wrong_location(w, ds, find_sub(ds, 0, 0, 1), 1);
    CHECK(a.prov.srcI == 1);
    CHECK(a.prov.srcJ == 0);

    // exact tie: lowest (i, j) in row-major order wins
    ds.covers[{0, 1, 1}] = 0.6;
    ds.covers[{1, 0, 1}] = 0.6;
    Submission b = attack_wrong_location(w, ds, find_sub(ds, 0, 0, 1), 1);
    CHECK(b.prov.srcI == 0);
    CHECK(b.prov.srcJ == 1);
}

TEST_CASE("wrong location: attacker swaps even when every neighbor is worse") {
    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    ds.covers[{0, 0, 0}] = 0.95;
    ds.covers[{0, 1, 0}] = 0.2;
    ds.covers[{1, 0, 0}] = 0.1;
    Submission a = attack_wrong_location(w, ds, find_sub(ds, 0, 0, 0), 1);
    CHECK(a.prov.srcJ == 1); // best of the worse options
    CHECK(a.cover == 0.2);
}

TEST_CASE("wrong time: earliest strictly-higher cover, with fallback") {
    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    ds.covers[{0, 0, 0}] = 0.9;
    ds.covers[{0, 0, 1}] = 0.9;
    ds.covers[{0, 0, 2}] = 0.4;
    CHECK(wrong_time_source(ds, 0, 0, 2) == 0);

    ds.covers[{0, 0, 0}] = 0.5;
    ds.covers[{0, 0, 1}] = 0.5;
    CHECK(wrong_time_source(ds, 0, 0, 1) == 0); // no strict increase: fallback

    ds.covers[{0, 0, 0}] = 0.3;
    ds.covers[{0, 0, 1}] = 0.8;
    ds.covers[{0, 0, 2}] = 0.4;
    CHECK(wrong_time_source(ds, 0, 0, 2) == 1);

    CHECK_THROWS_AS(wrong_time_source(ds, 0, 0, 0), std::invalid_argument);

    Submission a = attack_wrong_time(w, ds, find_sub(ds, 0, 0, 2), 9);
    CHECK(a.label == "wrong_time");
    CHECK(a.claimedT == 2);
    CHECK(a.prov.srcT == 1);
    CHECK(a.image.data == render_drone(w, 0, 0, 1, a.jitterSeed).data);
}

TEST_CASE("adversarial attack: zero steps, budget, and objective gain") {
    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    CoverRegressor reg = quick_regressor(ds, 5);
    const Submission& s = find_sub(ds, 0, 0, 0);

    PgdParams zero;
    zero.steps = 0;
    Submission a0 = attack_adversarial(reg, s, zero);
    CHECK(a0.image.data == s.image.data);
    CHECK(a0.label == "adversarial");

    PgdParams p; // defaults: eps 8/255, step 2/255, 20 steps
    Submission a = attack_adversarial(reg, s, p);
    double maxDelta = 0;
    for (size_t i = 0; i < a.image.data.size(); ++i)
        maxDelta = std::max(maxDelta, std::abs(a.image.data[i] - s.image.data[i]));
    CHECK(maxDelta <= p.epsilon + 1e-9);
    CHECK(maxDelta > 0.0);
    CHECK(reg.predict(a.image) >= reg.predict(s.image));
}

TEST_CASE("adversarial attack requires a trained regressor") {
    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    CoverRegressor reg(16);
    CHECK_THROWS_AS(attack_adversarial(reg, ds.submissions[0], PgdParams{}),
                    std::runtime_error);
}

TEST_CASE("combined attack: stage composition and boundaries") {
    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    CoverRegressor reg = quick_regressor(ds);

    // t = 0: wrong_time stage skipped
    Submission c0 = attack_combined(w, ds, find_sub(ds, 0, 0, 0), reg, PgdParams{}, 3);
    CHECK(c0.label == "combined");
    CHECK(c0.prov.stages == std::vector<std::string>{"wrong_location", "adversarial"});

    // t >= 1: all three stages, in order
    Submission c1 = attack_combined(w, ds, find_sub(ds, 0, 0, 2), reg, PgdParams{}, 3);
    CHECK(c1.prov.stages ==
          std::vector<std::string>{"wrong_location", "wrong_time", "adversarial"});
    CHECK(c1.claimedI == 0);
    CHECK(c1.claimedJ == 0);
    CHECK(c1.claimedT == 2);

    // epsilon = 0: image equals the pure location+time composition
    PgdParams eps0;
    eps0.epsilon = 0.0;
    Submission ce = attack_combined(w, ds, find_sub(ds, 0, 0, 2), reg, eps0, 3);
    CHECK(ce.image.data ==
          render_drone(w, ce.prov.srcI, ce.prov.srcJ, ce.prov.srcT, ce.jitterSeed).data);
}

TEST_CASE("regressor converges on a constant-cover dataset") {
    SplitMix64 g(21);
    std::vector<Submission> pool(12);
    std::vector<const Submission*> ptrs;
    for (size_t k = 0; k < pool.size(); ++k) {
        pool[k].image = random_raster(16, 100 + k);
        pool[k].cover = 0.7;
        ptrs.push_back(&pool[k]);
    }
    RegressorTrainConfig rc;
    rc.epochs = 60;
    rc.batchSize = 0;
    CoverRegressor reg = train_cover_regressor(ptrs, 16, rc);
    for (const auto* s : ptrs) CHECK(std::abs(reg.predict(s->image) - 0.7) <= 0.05);
}

TEST_CASE("regressor: empty dataset errors; full-batch loss mostly non-increasing") {
    RegressorTrainConfig rc;
    CHECK_THROWS_AS(train_cover_regressor({}, 16, rc), std::invalid_argument);

    World w = generate_world(tiny_config(2));
    Dataset ds = build_dataset(w, 5);
    rc.epochs = 30;
    rc.batchSize = 0;
    rc.useAdam = false;
    rc.learningRate = 1e-3;
    CoverRegressor reg = train_cover_regressor(ds, rc);
    const auto& h = reg.loss_history();
    REQUIRE(h.size() == 30);
    int nonIncreasing = 0;
    for (size_t e = 1; e < h.size(); ++e) nonIncreasing += h[e] <= h[e - 1] + 1e-12;
    CHECK(nonIncreasing >= static_cast<int>(0.95 * (h.size() - 1)));
}

TEST_CASE("generate_attacks: counts, determinism, and manifest parameters") {
    WorldConfig c = tiny_config(2);
    c.timesteps = 2;
    World w = generate_world(c);
    Dataset ds = build_dataset(w, 5);
    CoverRegressor reg = quick_regressor(ds);
    PgdParams p;
    p.steps = 2;
    Dataset atk = generate_attacks(w, ds, reg, p, AttackTypes{}, 31);
    // 8 truthful; per truthful: location + adversarial + combined, time only at t>=1
    CHECK(atk.submissions.size() == 8 + 8 + 4 + 8 + 8);
    CHECK(atk.attackParams.at("attackSeed") == 31);
    CHECK(atk.attackParams.at("epsilon") == p.epsilon);

    Dataset atk2 = generate_attacks(w, ds, reg, p, AttackTypes{}, 31);
    CHECK(manifest_string(atk) == manifest_string(atk2));

    // every attack image differs from the truthful render of its claim
    for (const auto& s : atk.submissions) {
        if (s.label == "truthful") continue;
        const Submission& truth = find_sub(atk, s.claimedI, s.claimedJ, s.claimedT);
        CHECK(s.image.data != truth.image.data);
    }
}
