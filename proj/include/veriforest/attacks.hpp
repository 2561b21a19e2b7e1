#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "veriforest/dataset.hpp"
#include "veriforest/nnet.hpp"
#include "veriforest/raster.hpp"
#include "veriforest/rng.hpp"
#include "veriforest/scenesim.hpp"

namespace veriforest {

// ---------------------------------------------------------------------------
// PGD

struct PgdParams {
    double epsilon = 8.0 / 255.0;
    double stepSize = 2.0 / 255.0;
    int steps = 20;
};

enum class PgdDirection { maximize, minimize };

// A differentiable scalar objective over a raster.
struct PgdObjective {
    std::function<double(const Raster&)> value;
    std::function<Raster(const Raster&)> grad;
};

// Sign-gradient steps projected after every iterate onto the l-inf ball
// around x0 intersected with [0,1]. Feasibility is exact.
inline Raster pgd_attack(const PgdObjective& obj, const Raster& x0, double epsilon,
                         double stepSize, int steps, PgdDirection dir) {
    if (epsilon < 0.0) throw std::invalid_argument("pgd_attack: epsilon < 0");
    if (stepSize <= 0.0) throw std::invalid_argument("pgd_attack: stepSize <= 0");
    if (steps < 0) throw std::invalid_argument("pgd_attack: steps < 0");
    const double s = dir == PgdDirection::maximize ? stepSize : -stepSize;
    Raster x = x0;
    for (int it = 0; it < steps; ++it) {
        Raster g = obj.grad(x);
        for (size_t i = 0; i < x.data.size(); ++i) {
            double step = g.data[i] > 0.0 ? s : (g.data[i] < 0.0 ? -s : 0.0);
            double v = x.data[i] + step;
            v = std::clamp(v, x0.data[i] - epsilon, x0.data[i] + epsilon);
            x.data[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return x;
}

// Objective: scalar network output (e.g. predicted cover).
inline PgdObjective scalar_net_objective(const nn::Network& net, const nn::Vec& params) {
    auto value = [&net, &params](const Raster& x) {
        return net.forward(params, x.data)[0];
    };
    auto grad = [&net, &params](const Raster& x) {
        std::vector<nn::Vec> trace;
        net.forward(params, x.data, &trace);
        nn::Vec din = net.backward(params, trace, nn::Vec{1.0}, nullptr);
        Raster g(x.height, x.width);
        g.data = std::move(din);
        return g;
    };
    return {value, grad};
}

// Objective: squared embedding distance to a fixed anchor embedding.
inline PgdObjective embedding_distance_objective(const nn::Network& pipeline,
                                                 const nn::Vec& params,
                                                 const nn::Vec& anchor) {
    auto value = [&pipeline, &params, anchor](const Raster& x) {
        nn::Vec y = pipeline.forward(params, x.data);
        double d = 0.0;
        for (size_t i = 0; i < y.size(); ++i) {
            double e = y[i] - anchor[i];
            d += e * e;
        }
        return d;
    };
    auto grad = [&pipeline, &params, anchor](const Raster& x) {
        std::vector<nn::Vec> trace;
        nn::Vec y = pipeline.forward(params, x.data, &trace);
        nn::Vec dout(y.size());
        for (size_t i = 0; i < y.size(); ++i) dout[i] = 2.0 * (y[i] - anchor[i]);
        nn::Vec din = pipeline.backward(params, trace, std::move(dout), nullptr);
        Raster g(x.height, x.width);
        g.data = std::move(din);
        return g;
    };
    return {value, grad};
}

// ---------------------------------------------------------------------------
// Cover regressor (PGD target standing in for the valuation model)

struct RegressorTrainConfig {
    int epochs = 40;
    double learningRate = 1e-3;
    int batchSize = 16; // 0 = full batch
    bool useAdam = true;
    uint64_t seed = 11;
};

class CoverRegressor {
public:
    explicit CoverRegressor(int inputEdge)
        : inputEdge_(inputEdge), net_(nn::make_cover_regressor_net(inputEdge)) {}

    int input_edge() const { return inputEdge_; }
    const nn::Network& net() const { return net_; }
    const nn::Vec& params() const { return params_; }
    void set_params(nn::Vec p) { params_ = std::move(p); }
    const std::vector<double>& loss_history() const { return lossHistory_; }
    bool trained() const { return !params_.empty(); }

    double predict(const Raster& img) const {
        if (!trained()) throw std::runtime_error("CoverRegressor: not trained");
        return net_.forward(params_, img.data)[0];
    }

    friend CoverRegressor train_cover_regressor(const std::vector<const Submission*>&,
                                                int, const RegressorTrainConfig&);

private:
    int inputEdge_;
    nn::Network net_;
    nn::Vec params_;
    std::vector<double> lossHistory_;
};

inline CoverRegressor train_cover_regressor(const std::vector<const Submission*>& subs,
                                            int inputEdge, const RegressorTrainConfig& cfg) {
    if (subs.empty()) throw std::invalid_argument("train_cover_regressor: empty dataset");
    CoverRegressor reg(inputEdge);
    reg.params_ = reg.net_.init_params(cfg.seed);
    nn::AdamState adam;

    const int n = static_cast<int>(subs.size());
    const int batch = cfg.batchSize <= 0 ? n : std::min(cfg.batchSize, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 sg(derive_seed(cfg.seed, kShuffle, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<int>(sg.below(i + 1))]);

        double epochLoss = 0.0;
        for (int start = 0; start < n; start += batch) {
            int end = std::min(start + batch, n);
            nn::Vec grads(reg.net_.param_count(), 0.0);
            double scale = 1.0 / (end - start);
            for (int k = start; k < end; ++k) {
                const Submission& s = *subs[order[k]];
                std::vector<nn::Vec> trace;
                nn::Vec y = reg.net_.forward(reg.params_, s.image.data, &trace);
                double err = y[0] - s.cover;
                epochLoss += err * err;
                reg.net_.backward(reg.params_, trace, nn::Vec{2.0 * err * scale}, &grads);
            }
            if (cfg.useAdam) {
                nn::adam_step(reg.params_, grads, adam, cfg.learningRate);
            } else {
                for (size_t i = 0; i < reg.params_.size(); ++i)
                    reg.params_[i] -= cfg.learningRate * grads[i];
            }
        }
        reg.lossHistory_.push_back(epochLoss / n);
    }
    return reg;
}

inline CoverRegressor train_cover_regressor(const Dataset& ds,
                                            const RegressorTrainConfig& cfg) {
    std::vector<const Submission*> truthful;
    for (const auto& s : ds.submissions)
        if (s.label == "truthful") truthful.push_back(&s);
    return train_cover_regressor(truthful, ds.world.parcelPixels, cfg);
}

// ---------------------------------------------------------------------------
// Attack vectors

// Greedy attacker: swap in the truthful render of the 4-neighbor parcel with
// maximal cover at the same timestep. Ties break to the lowest (i,j) in
// row-major order; the attacker always swaps.
inline Submission attack_wrong_location(const World& world, const Dataset& ds,
                                        const Submission& sub, uint64_t attackSeed) {
    if (world.config.gridSize * world.config.gridSize < 2)
        throw std::invalid_argument("attack_wrong_location: grid has a single parcel");
    const int i = sub.claimedI, j = sub.claimedJ, t = sub.claimedT;
    const int G = world.config.gridSize;
    int bi = -1, bj = -1;
    double best = -1.0;
    const int di[4] = {-1, 0, 0, 1};
    const int dj[4] = {0, -1, 1, 0};
    for (int k = 0; k < 4; ++k) { // row-major neighbor order
        int ni = i + di[k], nj = j + dj[k];
        if (ni < 0 || ni >= G || nj < 0 || nj >= G) continue;
        double c = ds.cover_of(ni, nj, t);
        if (c > best) {
            best = c;
            bi = ni;
            bj = nj;
        }
    }
    if (bi < 0) throw std::invalid_argument("attack_wrong_location: parcel has no neighbors");

    Submission out = sub;
    out.id = submission_id(i, j, t, "wrong_location");
    out.label = "wrong_location";
    out.jitterSeed = derive_seed(attackSeed, bi, bj, t, kAttackCapture);
    out.image = render_drone(world, bi, bj, t, out.jitterSeed);
    out.cover = ds.cover_of(bi, bj, t);
    out.prov = {bi, bj, t, {"wrong_location"}};
    return out;
}

// Earliest timestep t' < t with strictly higher cover; fall back to t' = 0.
inline int wrong_time_source(const Dataset& ds, int i, int j, int t) {
    if (t < 1)
        throw std::invalid_argument("attack_wrong_time: no previous flight exists at t=0");
    double cur = ds.cover_of(i, j, t);
    for (int tp = 0; tp < t; ++tp)
        if (ds.cover_of(i, j, tp) > cur) return tp;
    return 0;
}

inline Submission attack_wrong_time(const World& world, const Dataset& ds,
                                    const Submission& sub, uint64_t attackSeed) {
    const int i = sub.claimedI, j = sub.claimedJ, t = sub.claimedT;
    int tp = wrong_time_source(ds, i, j, t);
    Submission out = sub;
    out.id = submission_id(i, j, t, "wrong_time");
    out.label = "wrong_time";
    out.jitterSeed = derive_seed(attackSeed, i, j, tp, kAttackCapture, 1);
    out.image = render_drone(world, i, j, tp, out.jitterSeed);
    out.cover = ds.cover_of(i, j, tp);
    out.prov = {i, j, tp, {"wrong_time"}};
    return out;
}

inline Submission attack_adversarial(const CoverRegressor& reg, const Submission& sub,
                                     const PgdParams& p) {
    if (!reg.trained()) throw std::runtime_error("attack_adversarial: untrained regressor");
    Submission out = sub;
    out.id = submission_id(sub.claimedI, sub.claimedJ, sub.claimedT, "adversarial");
    out.label = "adversarial";
    out.image = pgd_attack(scalar_net_objective(reg.net(), reg.params()), sub.image,
                           p.epsilon, p.stepSize, p.steps, PgdDirection::maximize);
    out.prov.stages = {"adversarial"};
    return out;
}

// wrong_location, then the wrong_time rule on the swapped parcel, then PGD.
// At t = 0 the wrong_time stage is skipped.
inline Submission attack_combined(const World& world, const Dataset& ds,
                                  const Submission& sub, const CoverRegressor& reg,
                                  const PgdParams& p, uint64_t attackSeed) {
    Submission out = attack_wrong_location(world, ds, sub, attackSeed);
    std::vector<std::string> stages = {"wrong_location"};
    int si = out.prov.srcI, sj = out.prov.srcJ, st = out.prov.srcT;
    if (sub.claimedT >= 1) {
        int tp = wrong_time_source(ds, si, sj, sub.claimedT);
        st = tp;
        out.jitterSeed = derive_seed(attackSeed, si, sj, tp, kAttackCapture, 2);
        out.image = render_drone(world, si, sj, tp, out.jitterSeed);
        out.cover = ds.cover_of(si, sj, tp);
        stages.push_back("wrong_time");
    }
    out.image = pgd_attack(scalar_net_objective(reg.net(), reg.params()), out.image,
                           p.epsilon, p.stepSize, p.steps, PgdDirection::maximize);
    stages.push_back("adversarial");
    out.id = submission_id(sub.claimedI, sub.claimedJ, sub.claimedT, "combined");
    out.label = "combined";
    out.prov = {si, sj, st, stages};
    return out;
}

struct AttackTypes {
    bool location = true;
    bool time = true;
    bool adversarial = true;
    bool combined = true;
};

// Expands a truthful dataset with the selected attack vectors. The regressor
// is the PGD target for the adversarial stages.
inline Dataset generate_attacks(const World& world, const Dataset& truthful,
                                const CoverRegressor& reg, const PgdParams& pgd,
                                const AttackTypes& types, uint64_t attackSeed) {
    Dataset out = truthful;
    for (const auto& s : truthful.submissions) {
        if (s.label != "truthful") continue;
        if (types.location)
            out.submissions.push_back(attack_wrong_location(world, truthful, s, attackSeed));
        if (types.time && s.claimedT >= 1)
            out.submissions.push_back(attack_wrong_time(world, truthful, s, attackSeed));
        if (types.adversarial)
            out.submissions.push_back(attack_adversarial(reg, s, pgd));
        if (types.combined)
            out.submissions.push_back(attack_combined(world, truthful, s, reg, pgd, attackSeed));
    }
    std::sort(out.submissions.begin(), out.submissions.end(),
              [](const Submission& a, const Submission& b) { return a.id < b.id; });
    out.attackParams = ordered_json{{"epsilon", pgd.epsilon},
                                    {"stepSize", pgd.stepSize},
                                    {"steps", pgd.steps},
                                    {"attackSeed", attackSeed},
                                    {"types",
                                     {{"location", types.location},
                                      {"time", types.time},
                                      {"adversarial", types.adversarial},
                                      {"combined", types.combined}}}};
    return out;
}

} // namespace veriforest
