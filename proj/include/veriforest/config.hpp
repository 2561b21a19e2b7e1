#pragma once

#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "veriforest/evalharness.hpp"

namespace veriforest {

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& section,
                           const std::set<std::string>& allowed) {
    if (!obj.is_object())
        throw std::invalid_argument("config: section '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in section '" +
                                        section + "'");
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

} // namespace detail

// Parses the experiment config; every section and key is optional and falls
// back to the defaults, unknown keys are rejected.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    detail::reject_unknown(j, "<root>",
                           {"world", "capture", "attack", "evasion", "regressor", "classifier",
                            "train", "split"});
    ExperimentConfig cfg;

    if (j.contains("world")) {
        const auto& w = j.at("world");
        detail::reject_unknown(w, "world",
                               {"gridSize", "parcelPixels", "resolutionRatio", "timesteps",
                                "coverMin", "coverMax", "loggingProb", "loggingFracMin",
                                "loggingFracMax", "seed", "droneNoise", "satNoise",
                                "satIntensity", "jitterMin", "jitterMax", "parcelTint"});
        detail::read(w, "gridSize", cfg.world.gridSize);
        detail::read(w, "parcelPixels", cfg.world.parcelPixels);
        detail::read(w, "resolutionRatio", cfg.world.resolutionRatio);
        detail::read(w, "timesteps", cfg.world.timesteps);
        detail::read(w, "coverMin", cfg.world.coverMin);
        detail::read(w, "coverMax", cfg.world.coverMax);
        detail::read(w, "loggingProb", cfg.world.loggingProb);
        detail::read(w, "loggingFracMin", cfg.world.loggingFracMin);
        detail::read(w, "loggingFracMax", cfg.world.loggingFracMax);
        detail::read(w, "seed", cfg.world.seed);
        detail::read(w, "droneNoise", cfg.world.droneNoise);
        detail::read(w, "satNoise", cfg.world.satNoise);
        detail::read(w, "satIntensity", cfg.world.satIntensity);
        detail::read(w, "jitterMin", cfg.world.jitterMin);
        detail::read(w, "jitterMax", cfg.world.jitterMax);
        detail::read(w, "parcelTint", cfg.world.parcelTint);
    }
    if (j.contains("capture")) {
        detail::reject_unknown(j.at("capture"), "capture", {"seed"});
        detail::read(j.at("capture"), "seed", cfg.captureSeed);
    }
    if (j.contains("attack")) {
        const auto& a = j.at("attack");
        detail::reject_unknown(a, "attack", {"epsilon", "stepSize", "steps", "seed"});
        detail::read(a, "epsilon", cfg.attackPgd.epsilon);
        detail::read(a, "stepSize", cfg.attackPgd.stepSize);
        detail::read(a, "steps", cfg.attackPgd.steps);
        detail::read(a, "seed", cfg.attackSeed);
    }
    if (j.contains("evasion")) {
        const auto& e = j.at("evasion");
        detail::reject_unknown(e, "evasion", {"epsilon", "stepSize", "steps"});
        detail::read(e, "epsilon", cfg.evasionPgd.epsilon);
        detail::read(e, "stepSize", cfg.evasionPgd.stepSize);
        detail::read(e, "steps", cfg.evasionPgd.steps);
    }
    if (j.contains("regressor")) {
        const auto& r = j.at("regressor");
        detail::reject_unknown(r, "regressor",
                               {"epochs", "learningRate", "batchSize", "useAdam", "seed"});
        detail::read(r, "epochs", cfg.regressor.epochs);
        detail::read(r, "learningRate", cfg.regressor.learningRate);
        detail::read(r, "batchSize", cfg.regressor.batchSize);
        detail::read(r, "useAdam", cfg.regressor.useAdam);
        detail::read(r, "seed", cfg.regressor.seed);
    }
    if (j.contains("classifier")) {
        const auto& c = j.at("classifier");
        detail::reject_unknown(c, "classifier", {"epochs", "learningRate", "batchSize", "seed"});
        detail::read(c, "epochs", cfg.classifier.epochs);
        detail::read(c, "learningRate", cfg.classifier.learningRate);
        detail::read(c, "batchSize", cfg.classifier.batchSize);
        detail::read(c, "seed", cfg.classifier.seed);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown(t, "train",
                               {"margin", "learningRate", "batchSize", "maxEpochs", "mining",
                                "seed", "patience", "includeAdversarial"});
        detail::read(t, "margin", cfg.train.margin);
        detail::read(t, "learningRate", cfg.train.learningRate);
        detail::read(t, "batchSize", cfg.train.batchSize);
        detail::read(t, "maxEpochs", cfg.train.maxEpochs);
        if (t.contains("mining")) {
            std::string m = t.at("mining");
            if (m == "random")
                cfg.train.mining = MiningPolicy::random;
            else if (m == "semi_hard")
                cfg.train.mining = MiningPolicy::semi_hard;
            else
                throw std::invalid_argument("config: mining must be 'random' or 'semi_hard'");
        }
        detail::read(t, "seed", cfg.train.seed);
        detail::read(t, "patience", cfg.train.patience);
        detail::read(t, "includeAdversarial", cfg.train.includeAdversarial);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        detail::reject_unknown(s, "split", {"trainFraction", "valFraction", "seed"});
        detail::read(s, "trainFraction", cfg.split.trainFraction);
        detail::read(s, "valFraction", cfg.split.valFraction);
        detail::read(s, "seed", cfg.split.seed);
    }

    // env override for the world seed
    if (const char* env = std::getenv("VERIFORET_SEED")) cfg.world.seed = std::stoull(env);
    return cfg;
}

inline nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    return nlohmann::json::parse(in);
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(load_config_file(path));
}

// Full echo of the effective config (after defaults and env override), used
// in manifests and reports.
inline ordered_json experiment_config_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["world"] = world_config_json(cfg.world);
    j["capture"] = ordered_json{{"seed", cfg.captureSeed}};
    j["attack"] = ordered_json{{"epsilon", cfg.attackPgd.epsilon},
                               {"stepSize", cfg.attackPgd.stepSize},
                               {"steps", cfg.attackPgd.steps},
                               {"seed", cfg.attackSeed}};
    j["evasion"] = ordered_json{{"epsilon", cfg.evasionPgd.epsilon},
                                {"stepSize", cfg.evasionPgd.stepSize},
                                {"steps", cfg.evasionPgd.steps}};
    j["regressor"] = ordered_json{{"epochs", cfg.regressor.epochs},
                                  {"learningRate", cfg.regressor.learningRate},
                                  {"batchSize", cfg.regressor.batchSize},
                                  {"useAdam", cfg.regressor.useAdam},
                                  {"seed", cfg.regressor.seed}};
    j["classifier"] = ordered_json{{"epochs", cfg.classifier.epochs},
                                   {"learningRate", cfg.classifier.learningRate},
                                   {"batchSize", cfg.classifier.batchSize},
                                   {"seed", cfg.classifier.seed}};
    j["train"] = ordered_json{
        {"margin", cfg.train.margin},
        {"learningRate", cfg.train.learningRate},
        {"batchSize", cfg.train.batchSize},
        {"maxEpochs", cfg.train.maxEpochs},
        {"mining", cfg.train.mining == MiningPolicy::random ? "random" : "semi_hard"},
        {"seed", cfg.train.seed},
        {"patience", cfg.train.patience},
        {"includeAdversarial", cfg.train.includeAdversarial}};
    j["split"] = ordered_json{{"trainFraction", cfg.split.trainFraction},
                              {"valFraction", cfg.split.valFraction},
                              {"seed", cfg.split.seed}};
    return j;
}

} // namespace veriforest
