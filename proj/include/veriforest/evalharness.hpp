#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "veriforest/attacks.hpp"
#include "veriforest/baselines.hpp"
#include "veriforest/dataset.hpp"
#include "veriforest/hash.hpp"
#include "veriforest/metriclearn.hpp"
#include "veriforest/scenesim.hpp"
#include "veriforest/stats.hpp"
#include "veriforest/verifier.hpp"

namespace veriforest {

struct SplitConfig {
    double trainFraction = 0.6;
    double valFraction = 0.2;
    uint64_t seed = 5;
};

struct ExperimentConfig {
    WorldConfig world;
    uint64_t captureSeed = 1001;
    uint64_t attackSeed = 2002;
    PgdParams attackPgd;   // adversarial submission generation
    PgdParams evasionPgd;  // verifier-targeted white-box attack
    RegressorTrainConfig regressor;
    ClassifierTrainConfig classifier;
    TrainConfig train;
    SplitConfig split;
};

struct ParcelSplit {
    std::vector<int> train, val, test; // flat parcel indices i*G+j
};

inline ParcelSplit split_parcels(int gridSize, const SplitConfig& cfg) {
    int n = gridSize * gridSize;
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    SplitMix64 g(derive_seed(cfg.seed, kShuffle));
    for (int i = n - 1; i > 0; --i)
        std::swap(ids[i], ids[static_cast<int>(g.below(i + 1))]);
    int nTrain = std::max(1, static_cast<int>(std::lround(cfg.trainFraction * n)));
    int nVal = std::max(1, static_cast<int>(std::lround(cfg.valFraction * n)));
    if (nTrain + nVal >= n) throw std::invalid_argument("split_parcels: no test parcels left");
    ParcelSplit s;
    s.train.assign(ids.begin(), ids.begin() + nTrain);
    s.val.assign(ids.begin() + nTrain, ids.begin() + nTrain + nVal);
    s.test.assign(ids.begin() + nTrain + nVal, ids.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

// Restricts a dataset to the given parcels (claimed parcel decides membership).
inline Dataset filter_dataset(const Dataset& ds, const std::vector<int>& parcels) {
    std::set<int> keep(parcels.begin(), parcels.end());
    const int G = ds.world.gridSize;
    Dataset out;
    out.world = ds.world;
    out.captureSeed = ds.captureSeed;
    out.attackParams = ds.attackParams;
    for (const auto& s : ds.submissions)
        if (keep.count(s.claimedI * G + s.claimedJ)) out.submissions.push_back(s);
    for (const auto& [key, img] : ds.satellites) {
        auto [i, j, t] = key;
        if (keep.count(i * G + j)) {
            out.satellites[key] = img;
            out.covers[key] = ds.cover_of(i, j, t);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Robustness: white-box PGD against the verifier

// For each untruthful submission, PGD-minimize the embedding distance to its
// claimed anchor tile; evasion = fraction whose verdict flips to TRUTHFUL.
inline double evasion_rate(const EmbeddingModel& model, const Calibration& cal,
                           const Dataset& ds, const PgdParams& pgd) {
    nn::Network pipeline = nn::make_encoder_pipeline(ds.world.parcelPixels);
    long evaded = 0, total = 0;
    for (const auto& s : ds.submissions) {
        if (s.label == "truthful") continue;
        const Raster& tile = ds.satellite(s.claimedI, s.claimedJ, s.claimedT);
        nn::Vec anchor = model.embed_prepared(nn::prepare_encoder_input(tile));
        Raster adv = pgd_attack(
            embedding_distance_objective(pipeline, model.params(), anchor), s.image,
            pgd.epsilon, pgd.stepSize, pgd.steps, PgdDirection::minimize);
        double d = squared_distance(anchor,
                                    pipeline.forward(model.params(), adv.data));
        ++total;
        if (d <= cal.tau) ++evaded;
    }
    if (total == 0) throw std::invalid_argument("evasion_rate: no untruthful submissions");
    return static_cast<double>(evaded) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Experiment report

struct MetricAttackResult {
    double rocAuc = 0.0;
    double balancedAccuracy = 0.0; // at the metric's calibrated tau
    Histogram truthfulHist;
    Histogram attackHist;
};

struct ExperimentReport {
    ordered_json configEcho;
    ParcelSplit split;
    bool wrongTimeVacuous = false;
    // Wrong-time instances on the test split, partitioned by whether any cover
    // change separates the source flight from the claimed time. A replayed
    // capture of an unchanged parcel is statistically identical to a truthful
    // one, so only informative instances enter the wrong_time separability row
    // (the counts make the exclusion auditable).
    long wrongTimeInformativeCount = 0;
    long wrongTimeVacuousCount = 0;
    // metric name -> attack label -> result
    std::map<std::string, std::map<std::string, MetricAttackResult>> metrics;
    std::map<std::string, Calibration> calibrations;
    double validationMargin = 0.0;
    double evasionWithAdvTraining = 0.0;
    double evasionWithoutAdvTraining = 0.0;
    double evasionEpsilon = 0.0;
    nn::Vec learnedParams;       // trained encoder weights (adv-inclusive model)
    uint64_t learnedSeed = 0;
    std::vector<EpochRecord> trainingHistory;
};

inline ordered_json histogram_json(const Histogram& h) {
    return ordered_json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

inline ordered_json report_json(const ExperimentReport& r) {
    ordered_json j;
    j["format"] = "veriforest-report-v1";
    j["config"] = r.configEcho;
    j["split"] = ordered_json{
        {"trainParcels", r.split.train}, {"valParcels", r.split.val},
        {"testParcels", r.split.test}};
    j["wrongTimeVacuous"] = r.wrongTimeVacuous;
    j["wrongTimeInformativeCount"] = r.wrongTimeInformativeCount;
    j["wrongTimeVacuousCount"] = r.wrongTimeVacuousCount;
    ordered_json metrics;
    for (const auto& [metric, byAttack] : r.metrics) {
        ordered_json m;
        for (const auto& [label, res] : byAttack)
            m[label] = ordered_json{{"rocAuc", res.rocAuc},
                                    {"balancedAccuracy", res.balancedAccuracy},
                                    {"truthfulHistogram", histogram_json(res.truthfulHist)},
                                    {"attackHistogram", histogram_json(res.attackHist)}};
        metrics[metric] = std::move(m);
    }
    j["metrics"] = std::move(metrics);
    ordered_json cals;
    for (const auto& [metric, cal] : r.calibrations) cals[metric] = calibration_json(cal);
    j["calibrations"] = std::move(cals);
    j["validationMargin"] = r.validationMargin;
    j["robustness"] = ordered_json{{"epsilon", r.evasionEpsilon},
                                   {"evasionWithAdvTraining", r.evasionWithAdvTraining},
                                   {"evasionWithoutAdvTraining", r.evasionWithoutAdvTraining}};
    return j;
}

inline std::string histograms_csv(const ExperimentReport& r) {
    std::string out = "metric,attackLabel,class,bin,lo,hi,count\n";
    char buf[256];
    for (const auto& [metric, byAttack] : r.metrics)
        for (const auto& [label, res] : byAttack)
            for (int cls = 0; cls < 2; ++cls) {
                const Histogram& h = cls == 0 ? res.truthfulHist : res.attackHist;
                double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
                for (size_t b = 0; b < h.counts.size(); ++b) {
                    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%zu,%.17g,%.17g,%ld\n",
                                  metric.c_str(), label.c_str(),
                                  cls == 0 ? "truthful" : "attack", b, h.lo + width * b,
                                  h.lo + width * (b + 1), h.counts[b]);
                    out += buf;
                }
            }
    return out;
}

// ---------------------------------------------------------------------------
// run_experiment

namespace detail {

struct Stage {
    const char* name;
};

template <class F>
auto run_stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("experiment stage '") + name +
                                 "' failed: " + e.what());
    }
}

inline std::vector<std::string> attack_labels() {
    return {"wrong_location", "wrong_time", "adversarial", "combined"};
}

} // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                       ordered_json configEcho = {}) {
    constexpr int kHistBins = 30;
    ExperimentReport rep;
    rep.configEcho = std::move(configEcho);

    World world = detail::run_stage("generate_world", [&] { return generate_world(cfg.world); });
    Dataset truthful =
        detail::run_stage("build_dataset", [&] { return build_dataset(world, cfg.captureSeed); });
    rep.split = split_parcels(cfg.world.gridSize, cfg.split);

    // vacuous wrong-time attacks: cover never decreases anywhere
    rep.wrongTimeVacuous = true;
    for (int i = 0; i < cfg.world.gridSize && rep.wrongTimeVacuous; ++i)
        for (int j = 0; j < cfg.world.gridSize && rep.wrongTimeVacuous; ++j)
            for (int t = 1; t < cfg.world.timesteps; ++t)
                if (forest_cover(world, i, j, t) < forest_cover(world, i, j, t - 1)) {
                    rep.wrongTimeVacuous = false;
                    break;
                }

    std::vector<int> fitParcels = rep.split.train; // training stages see train+val only
    fitParcels.insert(fitParcels.end(), rep.split.val.begin(), rep.split.val.end());
    std::sort(fitParcels.begin(), fitParcels.end());

    Dataset truthfulFit = filter_dataset(truthful, fitParcels);
    CoverRegressor regressor = detail::run_stage("train_cover_regressor", [&] {
        return train_cover_regressor(truthfulFit, cfg.regressor);
    });
    FeatureExtractor fx = detail::run_stage("train_feature_extractor", [&] {
        return train_feature_extractor(truthfulFit, cfg.classifier);
    });

    Dataset attacked = detail::run_stage("generate_attacks", [&] {
        return generate_attacks(world, truthful, regressor, cfg.attackPgd, AttackTypes{},
                                cfg.attackSeed);
    });

    Dataset trainDs = filter_dataset(attacked, rep.split.train);
    Dataset valDs = filter_dataset(attacked, rep.split.val);
    Dataset testDs = filter_dataset(attacked, rep.split.test);

    CellBank valBank = build_cell_bank(valDs, true);
    EmbeddingModel modelAdv = detail::run_stage("train_metric", [&] {
        return train_metric(build_cell_bank(trainDs, true), valBank, cfg.train);
    });
    TrainConfig noAdvCfg = cfg.train;
    noAdvCfg.includeAdversarial = false;
    EmbeddingModel modelNoAdv = detail::run_stage("train_metric_no_adv", [&] {
        return train_metric(build_cell_bank(trainDs, false),
                            build_cell_bank(valDs, false), noAdvCfg);
    });
    rep.validationMargin = validation_margin(modelAdv, valBank);
    rep.learnedParams = modelAdv.params();
    rep.learnedSeed = cfg.train.seed;
    rep.trainingHistory = modelAdv.history;

    // distance functions per metric
    auto distanceOf = [&](const std::string& metric, const EmbeddingModel& model,
                          const Submission& s, const Dataset& store) {
        const Raster& tile = store.satellite(s.claimedI, s.claimedJ, s.claimedT);
        if (metric == "pixel") return pixel_distance(s.image, tile);
        if (metric == "feature") return feature_distance(fx, s.image, tile);
        return verification_distance(model, s.image, tile);
    };

    // Partition the test split's wrong-time attacks: when no logging separates
    // the source flight from the claimed time, the parcel is unchanged and the
    // replayed capture carries no temporal signal. Those instances are excluded
    // from the wrong_time row (unless every instance is vacuous) and counted.
    auto isVacuousWrongTime = [&](const Submission& s) {
        return s.label == "wrong_time" &&
               testDs.cover_of(s.claimedI, s.claimedJ, s.prov.srcT) ==
                   testDs.cover_of(s.claimedI, s.claimedJ, s.claimedT);
    };
    for (const auto& s : testDs.submissions)
        if (s.label == "wrong_time")
            (isVacuousWrongTime(s) ? rep.wrongTimeVacuousCount
                                   : rep.wrongTimeInformativeCount)++;

    const std::vector<std::string> metricNames = {"pixel", "feature", "learned"};
    for (const auto& metric : metricNames) {
        // calibrate on validation parcels
        std::vector<std::pair<double, bool>> valSamples;
        for (const auto& s : valDs.submissions)
            valSamples.emplace_back(distanceOf(metric, modelAdv, s, valDs),
                                    s.label == "truthful");
        Calibration cal = detail::run_stage("calibrate", [&] { return calibrate(valSamples); });
        cal.datasetHash = git_blob_hash(manifest_string(valDs));
        rep.calibrations[metric] = cal;

        // evaluate on held-out test parcels
        std::vector<double> truthfulDist;
        std::map<std::string, std::vector<double>> attackDist;
        for (const auto& s : testDs.submissions) {
            if (rep.wrongTimeInformativeCount > 0 && isVacuousWrongTime(s)) continue;
            double d = distanceOf(metric, modelAdv, s, testDs);
            if (s.label == "truthful")
                truthfulDist.push_back(d);
            else
                attackDist[s.label].push_back(d);
        }
        for (const auto& label : detail::attack_labels()) {
            auto it = attackDist.find(label);
            if (it == attackDist.end() || it->second.empty()) continue;
            MetricAttackResult res;
            res.rocAuc = auc(truthfulDist, it->second);
            std::vector<std::pair<double, bool>> samples;
            for (double d : truthfulDist) samples.emplace_back(d, true);
            for (double d : it->second) samples.emplace_back(d, false);
            res.balancedAccuracy = balanced_accuracy(samples, cal.tau);
            double lo = truthfulDist.empty() ? 0.0 : truthfulDist.front();
            double hi = lo;
            for (const auto& [d, lbl] : samples) {
                lo = std::min(lo, d);
                hi = std::max(hi, d);
            }
            res.truthfulHist = histogram(truthfulDist, kHistBins, lo, hi);
            res.attackHist = histogram(it->second, kHistBins, lo, hi);
            rep.metrics[metric][label] = std::move(res);
        }
    }

    // robustness: white-box verifier attack under both training regimes
    rep.evasionEpsilon = cfg.evasionPgd.epsilon;
    rep.evasionWithAdvTraining = detail::run_stage("evasion_adv_trained", [&] {
        return evasion_rate(modelAdv, rep.calibrations.at("learned"), testDs, cfg.evasionPgd);
    });
    std::vector<std::pair<double, bool>> noAdvValSamples;
    for (const auto& s : valDs.submissions)
        noAdvValSamples.emplace_back(
            verification_distance(modelNoAdv, s.image,
                                  valDs.satellite(s.claimedI, s.claimedJ, s.claimedT)),
            s.label == "truthful");
    Calibration noAdvCal = calibrate(noAdvValSamples);
    rep.evasionWithoutAdvTraining = detail::run_stage("evasion_no_adv", [&] {
        return evasion_rate(modelNoAdv, noAdvCal, testDs, cfg.evasionPgd);
    });

    return rep;
}

} // namespace veriforest
