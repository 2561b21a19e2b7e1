#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "veriforest/dataset.hpp"
#include "veriforest/metriclearn.hpp"
#include "veriforest/stats.hpp"

namespace veriforest {

struct ClassStats {
    long count = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct Calibration {
    double tau = 0.0;
    double balancedAccuracy = 0.0;
    double rocAuc = 0.0;
    ClassStats truthful;
    ClassStats untruthful;
    std::string datasetHash;
};

// Verdict rule: TRUTHFUL iff distance <= tau (boundary inclusive).
inline double balanced_accuracy(const std::vector<std::pair<double, bool>>& samples,
                                double tau) {
    long tOk = 0, tAll = 0, uOk = 0, uAll = 0;
    for (const auto& [d, truthful] : samples) {
        if (truthful) {
            ++tAll;
            if (d <= tau) ++tOk;
        } else {
            ++uAll;
            if (d > tau) ++uOk;
        }
    }
    return 0.5 * (static_cast<double>(tOk) / tAll + static_cast<double>(uOk) / uAll);
}

// Exhaustive scan over midpoints between adjacent distinct distances plus
// below-min / above-max sentinels; maximizes balanced accuracy, smallest tau
// on ties.
inline Calibration calibrate(const std::vector<std::pair<double, bool>>& samples) {
    std::vector<double> tv, uv;
    for (const auto& [d, truthful] : samples) (truthful ? tv : uv).push_back(d);
    if (tv.empty() || uv.empty())
        throw std::invalid_argument("calibrate: need at least one example of each class");

    std::vector<double> dist;
    dist.reserve(samples.size());
    for (const auto& [d, truthful] : samples) dist.push_back(d);
    std::sort(dist.begin(), dist.end());
    dist.erase(std::unique(dist.begin(), dist.end()), dist.end());

    // below-min sentinel stays nonnegative (distances are nonnegative)
    std::vector<double> candidates;
    candidates.push_back(std::max(0.0, dist.front() - 1.0));
    for (size_t i = 0; i + 1 < dist.size(); ++i)
        candidates.push_back(0.5 * (dist[i] + dist[i + 1]));
    candidates.push_back(dist.back() + 1.0);

    Calibration cal;
    cal.tau = candidates.front();
    cal.balancedAccuracy = -1.0;
    for (double tau : candidates) {
        double ba = balanced_accuracy(samples, tau);
        if (ba > cal.balancedAccuracy ||
            (ba == cal.balancedAccuracy && tau < cal.tau)) {
            cal.balancedAccuracy = ba;
            cal.tau = tau;
        }
    }

    auto stats = [](const std::vector<double>& v) {
        ClassStats s;
        s.count = static_cast<long>(v.size());
        s.min = *std::min_element(v.begin(), v.end());
        s.max = *std::max_element(v.begin(), v.end());
        for (double x : v) s.mean += x;
        s.mean /= static_cast<double>(v.size());
        return s;
    };
    cal.truthful = stats(tv);
    cal.untruthful = stats(uv);
    cal.rocAuc = auc(tv, uv);
    return cal;
}

struct Verdict {
    std::string decision; // TRUTHFUL | UNTRUTHFUL
    double distance = 0.0;
    double tau = 0.0;
    double margin = 0.0; // tau - distance
    std::string submissionId;
};

// Learned-metric distance between a submission image and the satellite tile
// of its claimed (parcel, t).
inline double verification_distance(const EmbeddingModel& model, const Raster& droneImage,
                                    const Raster& satTile) {
    nn::Vec es = model.embed_prepared(nn::prepare_encoder_input(satTile));
    nn::Vec ed = model.embed_prepared(nn::prepare_encoder_input(droneImage));
    return squared_distance(es, ed);
}

// A missing satellite tile throws (verification impossible), which is a
// distinct outcome from UNTRUTHFUL.
inline Verdict verify(const EmbeddingModel& model, const Calibration& cal,
                      const Submission& sub, const Dataset& satelliteStore) {
    const Raster& tile = satelliteStore.satellite(sub.claimedI, sub.claimedJ, sub.claimedT);
    Verdict v;
    v.submissionId = sub.id;
    v.tau = cal.tau;
    v.distance = verification_distance(model, sub.image, tile);
    v.margin = cal.tau - v.distance;
    v.decision = v.distance <= cal.tau ? "TRUTHFUL" : "UNTRUTHFUL";
    return v;
}

inline nlohmann::ordered_json calibration_json(const Calibration& cal) {
    auto classJson = [](const ClassStats& s) {
        return nlohmann::ordered_json{
            {"count", s.count}, {"mean", s.mean}, {"min", s.min}, {"max", s.max}};
    };
    return nlohmann::ordered_json{{"tau", cal.tau},
                                  {"balancedAccuracy", cal.balancedAccuracy},
                                  {"rocAuc", cal.rocAuc},
                                  {"truthful", classJson(cal.truthful)},
                                  {"untruthful", classJson(cal.untruthful)},
                                  {"datasetHash", cal.datasetHash}};
}

inline Calibration calibration_from_json(const nlohmann::json& j) {
    Calibration cal;
    cal.tau = j.at("tau");
    cal.balancedAccuracy = j.at("balancedAccuracy");
    cal.rocAuc = j.at("rocAuc");
    auto readClass = [](const nlohmann::json& c) {
        ClassStats s;
        s.count = c.at("count");
        s.mean = c.at("mean");
        s.min = c.at("min");
        s.max = c.at("max");
        return s;
    };
    cal.truthful = readClass(j.at("truthful"));
    cal.untruthful = readClass(j.at("untruthful"));
    cal.datasetHash = j.at("datasetHash");
    return cal;
}

inline nlohmann::ordered_json verdict_json(const Verdict& v) {
    return nlohmann::ordered_json{{"decision", v.decision},
                                  {"distance", v.distance},
                                  {"tau", v.tau},
                                  {"margin", v.margin},
                                  {"submissionId", v.submissionId}};
}

} // namespace veriforest
