#include <doctest.h>

#include <cmath>
#include <set>

#include "veriforest/evalharness.hpp"

using namespace veriforest;

namespace {

// brute-force pairwise AUC with half-weight ties
double auc_brute(const std::vector<double>& t, const std::vector<double>& u) {
    double s = 0;
    for (double a : t)
        for (double b : u) s += b > a ? 1.0 : (b == a ? 0.5 : 0.0);
    return s / (t.size() * u.size());
}

ExperimentConfig tiny_experiment() {
    ExperimentConfig cfg;
    cfg.world.gridSize = 2;
    cfg.world.parcelPixels = 16;
    cfg.world.resolutionRatio = 8;
    cfg.world.timesteps = 2;
    cfg.world.seed = 7;
    cfg.regressor.epochs = 2;
    cfg.classifier.epochs = 2;
    cfg.train.maxEpochs = 2;
    cfg.attackPgd.steps = 2;
    cfg.evasionPgd.steps = 1;
    return cfg;
}

} // namespace

TEST_CASE("auc: tagged examples") {
    CHECK(auc({0.1, 0.2}, {0.3, 0.4}) == 1.0);
    CHECK(auc({0.5}, {0.5}) == 0.5);
    CHECK(auc({0.1, 0.3}, {0.2, 0.4}) == 0.75);
    CHECK_THROWS_AS(auc({}, {0.1}), std::invalid_argument);
    CHECK_THROWS_AS(auc({0.1}, {}), std::invalid_argument);
}

TEST_CASE("auc: rank statistic equals brute-force pairwise counting") {
    SplitMix64 g(42);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> t(1 + g.below(12)), u(1 + g.below(12));
        // quantized values force plenty of ties
        for (auto& v : t) v = 0.1 * static_cast<double>(g.below(10));
        for (auto& v : u) v = 0.1 * static_cast<double>(g.below(10));
        double got = auc(t, u);
        CHECK(got == doctest::Approx(auc_brute(t, u)).epsilon(1e-12));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("histogram: counts sum to sample count, range edges included") {
    std::vector<double> v = {0.0, 0.1, 0.5, 1.0, 1.0};
    Histogram h = histogram(v, 4, 0.0, 1.0);
    long total = 0;
    for (long c : h.counts) total += c;
    CHECK(total == 5);
    CHECK(h.counts.size() == 4);
    CHECK(h.counts[3] == 2); // top edge inclusive
    CHECK(h.counts[0] == 2);

    Histogram flat = histogram({0.3, 0.3}, 5, 0.3, 0.3); // zero-width range
    CHECK(flat.counts[0] == 2);
}

TEST_CASE("split_parcels: disjoint, exhaustive, deterministic") {
    SplitConfig cfg;
    ParcelSplit s = split_parcels(8, cfg);
    CHECK(s.train.size() == 38); // round(0.6 * 64)
    CHECK(s.val.size() == 13);   // round(0.2 * 64)
    CHECK(s.test.size() == 13);
    std::set<int> all;
    for (int p : s.train) all.insert(p);
    for (int p : s.val) all.insert(p);
    for (int p : s.test) all.insert(p);
    CHECK(all.size() == 64);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 63);

    ParcelSplit s2 = split_parcels(8, cfg);
    CHECK(s.train == s2.train);
    CHECK(s.val == s2.val);
    CHECK(s.test == s2.test);

    SplitConfig greedy;
    greedy.trainFraction = 0.8;
    greedy.valFraction = 0.2;
    CHECK_THROWS_AS(split_parcels(2, greedy), std::invalid_argument);
}

TEST_CASE("filter_dataset keeps only the claimed parcels") {
    WorldConfig wc;
    wc.gridSize = 2;
    wc.parcelPixels = 16;
    wc.timesteps = 2;
    World w = generate_world(wc);
    Dataset ds = build_dataset(w, 3);
    Dataset sub = filter_dataset(ds, {0, 3}); // parcels (0,0) and (1,1)
    CHECK(sub.submissions.size() == 4);
    CHECK(sub.satellites.size() == 4);
    for (const auto& s : sub.submissions) {
        int flat = s.claimedI * 2 + s.claimedJ;
        CHECK((flat == 0 || flat == 3));
    }
    CHECK_NOTHROW(sub.satellite(1, 1, 0));
    CHECK_THROWS_AS(sub.satellite(0, 1, 0), std::runtime_error);
}

TEST_CASE("evasion rate: zero budget equals the pre-attack false-negative rate") {
    WorldConfig wc;
    wc.gridSize = 2;
    wc.parcelPixels = 16;
    wc.timesteps = 2;
    World w = generate_world(wc);
    Dataset ds = build_dataset(w, 3);
    RegressorTrainConfig rc;
    rc.epochs = 2;
    CoverRegressor reg = train_cover_regressor(ds, rc);
    PgdParams atk;
    atk.steps = 2;
    Dataset attacked = generate_attacks(w, ds, reg, atk, AttackTypes{}, 11);

    EmbeddingModel model(5);
    std::vector<std::pair<double, bool>> samples;
    for (const auto& s : attacked.submissions)
        samples.emplace_back(
            verification_distance(model, s.image,
                                  attacked.satellite(s.claimedI, s.claimedJ, s.claimedT)),
            s.label == "truthful");
    Calibration cal = calibrate(samples);

    long fn = 0, total = 0;
    for (size_t k = 0; k < samples.size(); ++k) {
        if (samples[k].second) continue;
        ++total;
        if (samples[k].first <= cal.tau) ++fn;
    }
    double preAttackFnr = static_cast<double>(fn) / total;

    PgdParams eps0;
    eps0.epsilon = 0.0;
    CHECK(evasion_rate(model, cal, attacked, eps0) == preAttackFnr);
    PgdParams steps0;
    steps0.steps = 0;
    CHECK(evasion_rate(model, cal, attacked, steps0) == preAttackFnr);

    Dataset truthfulOnly = ds;
    CHECK_THROWS_AS(evasion_rate(model, cal, truthfulOnly, eps0), std::invalid_argument);
}

TEST_CASE("run_experiment: sane report on a tiny config, deterministic bytes") {
    ExperimentConfig cfg = tiny_experiment();
    ExperimentReport rep = run_experiment(cfg);

    // all three metrics evaluated for every non-empty attack label
    for (const char* metric : {"pixel", "feature", "learned"}) {
        REQUIRE(rep.metrics.count(metric) == 1);
        for (const auto& [label, res] : rep.metrics.at(metric)) {
            CHECK(res.rocAuc >= 0.0);
            CHECK(res.rocAuc <= 1.0);
            CHECK(res.balancedAccuracy >= 0.0);
            CHECK(res.balancedAccuracy <= 1.0);
            CHECK(res.truthfulHist.counts.size() == 30);
            long t = 0, a = 0;
            for (long c : res.truthfulHist.counts) t += c;
            for (long c : res.attackHist.counts) a += c;
            CHECK(t > 0);
            CHECK(a > 0);
        }
        CHECK(rep.calibrations.at(metric).tau >= 0.0);
    }
    CHECK(rep.learnedParams.size() == 6560);
    CHECK(!rep.trainingHistory.empty());

    ExperimentReport rep2 = run_experiment(cfg);
    CHECK(report_json(rep).dump(2) == report_json(rep2).dump(2));
    CHECK(histograms_csv(rep) == histograms_csv(rep2));
    CHECK(rep.learnedParams == rep2.learnedParams);

    // csv header and row count match the report
    std::string csv = histograms_csv(rep);
    CHECK(csv.rfind("metric,attackLabel,class,bin,lo,hi,count\n", 0) == 0);
    size_t rows = std::count(csv.begin(), csv.end(), '\n') - 1;
    size_t cells = 0;
    for (const auto& [m, byAttack] : rep.metrics) cells += byAttack.size();
    CHECK(rows == cells * 2 * 30);
}

TEST_CASE("run_experiment: loggingProb = 0 flags wrong-time attacks as vacuous") {
    ExperimentConfig cfg = tiny_experiment();
    cfg.world.loggingProb = 0.0;
    ExperimentReport rep = run_experiment(cfg);
    CHECK(rep.wrongTimeVacuous);
    CHECK(rep.wrongTimeInformativeCount == 0);
    CHECK(rep.wrongTimeVacuousCount > 0);
    // degenerate attacks still get a (signal-free) row rather than vanishing
    CHECK(rep.metrics.at("learned").count("wrong_time") == 1);

    ExperimentConfig active = tiny_experiment();
    active.world.loggingProb = 1.0;
    ExperimentReport repActive = run_experiment(active);
    CHECK_FALSE(repActive.wrongTimeVacuous);
    CHECK(repActive.wrongTimeVacuousCount == 0);
    CHECK(repActive.wrongTimeInformativeCount > 0);
}

TEST_CASE("run_experiment: vacuous wrong-time instances stay out of the row") {
    // Counts partition the test split's wrong-time attacks, and the wrong_time
    // histograms hold exactly the informative instances when any exist.
    ExperimentConfig cfg = tiny_experiment();
    ExperimentReport rep = run_experiment(cfg);
    World w = generate_world(cfg.world);
    std::set<int> testParcels(rep.split.test.begin(), rep.split.test.end());
    long informative = 0, vacuous = 0;
    for (int i = 0; i < cfg.world.gridSize; ++i)
        for (int j = 0; j < cfg.world.gridSize; ++j) {
            if (!testParcels.count(i * cfg.world.gridSize + j)) continue;
            for (int t = 1; t < cfg.world.timesteps; ++t) {
                // replicate wrong_time_source: earliest strictly-higher cover, else 0
                int tp = 0;
                for (int c = 0; c < t; ++c)
                    if (forest_cover(w, i, j, c) > forest_cover(w, i, j, t)) {
                        tp = c;
                        break;
                    }
                (forest_cover(w, i, j, tp) == forest_cover(w, i, j, t) ? vacuous
                                                                       : informative)++;
            }
        }
    CHECK(rep.wrongTimeInformativeCount == informative);
    CHECK(rep.wrongTimeVacuousCount == vacuous);
    if (informative > 0) {
        const auto& res = rep.metrics.at("learned").at("wrong_time");
        long n = 0;
        for (long c : res.attackHist.counts) n += c;
        CHECK(n == informative);
    }
}

TEST_CASE("run_experiment: stage failures carry the stage name") {
    ExperimentConfig cfg = tiny_experiment();
    cfg.train.margin = -1.0;
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("train_metric"),
                         std::runtime_error);
}
