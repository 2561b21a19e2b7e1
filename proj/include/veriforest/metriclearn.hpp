#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "veriforest/dataset.hpp"
#include "veriforest/nnet.hpp"
#include "veriforest/rng.hpp"

namespace veriforest {

// ---------------------------------------------------------------------------
// Embedding model

struct EpochRecord {
    int epoch = 0;
    double trainLoss = 0.0;
    double valMargin = 0.0;
};

class EmbeddingModel {
public:
    EmbeddingModel() : net_(nn::make_encoder()) {}
    explicit EmbeddingModel(uint64_t seed) : net_(nn::make_encoder()), seed_(seed) {
        params_ = net_.init_params(seed);
    }

    const nn::Network& net() const { return net_; }
    const nn::Vec& params() const { return params_; }
    void set_params(nn::Vec p) {
        if (static_cast<int>(p.size()) != net_.param_count())
            throw std::invalid_argument("EmbeddingModel: parameter count mismatch");
        params_ = std::move(p);
    }
    uint64_t seed() const { return seed_; }
    void set_seed(uint64_t s) { seed_ = s; }

    std::vector<EpochRecord> history;

    // prepared = 32x32x3 standardized tensor (see nn::prepare_encoder_input)
    nn::Vec embed_prepared(const nn::Vec& prepared) const {
        return net_.forward(params_, prepared);
    }
    nn::Vec embed(const Raster& img) const {
        if (img.height != nn::kEncoderInputEdge || img.width != nn::kEncoderInputEdge)
            throw std::invalid_argument("embed: expected 32x32 raster");
        return net_.forward(params_, standardize(img));
    }

private:
    nn::Network net_;
    nn::Vec params_;
    uint64_t seed_ = 0;
};

inline double squared_distance(const nn::Vec& a, const nn::Vec& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double e = a[i] - b[i];
        d += e * e;
    }
    return d;
}

// max(0, ||a-p||^2 - ||a-n||^2 + alpha) on unit-norm embeddings
inline double triplet_loss(const nn::Vec& a, const nn::Vec& p, const nn::Vec& n,
                           double alpha) {
    return std::max(0.0, squared_distance(a, p) - squared_distance(a, n) + alpha);
}

// ---------------------------------------------------------------------------
// VFW1 weights file: magic "VFW1", u32 LE header length, UTF-8 JSON header,
// raw little-endian float32 parameters in declaration order.

inline void save_weights(const std::filesystem::path& path, const nn::Network& net,
                         const nn::Vec& params, uint64_t seed) {
    nlohmann::ordered_json header{{"architecture", net.describe()},
                                  {"param_count", net.param_count()},
                                  {"seed", seed}};
    std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_weights: cannot open " + path.string());
    out.write("VFW1", 4);
    uint32_t len = static_cast<uint32_t>(hs.size());
    unsigned char lenb[4] = {static_cast<unsigned char>(len & 0xff),
                             static_cast<unsigned char>((len >> 8) & 0xff),
                             static_cast<unsigned char>((len >> 16) & 0xff),
                             static_cast<unsigned char>((len >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(lenb), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (double v : params) {
        float f = static_cast<float>(v);
        static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                              static_cast<unsigned char>((bits >> 8) & 0xff),
                              static_cast<unsigned char>((bits >> 16) & 0xff),
                              static_cast<unsigned char>((bits >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
}

struct LoadedWeights {
    nlohmann::json header;
    nn::Vec params;
};

inline LoadedWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_weights: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string(magic, 4) != "VFW1")
        throw std::runtime_error("load_weights: bad magic in " + path.string());
    unsigned char lenb[4];
    in.read(reinterpret_cast<char*>(lenb), 4);
    uint32_t len = lenb[0] | (lenb[1] << 8) | (lenb[2] << 16) |
                   (static_cast<uint32_t>(lenb[3]) << 24);
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    LoadedWeights lw;
    lw.header = nlohmann::json::parse(hs);
    int n = lw.header.at("param_count");
    lw.params.resize(n);
    for (int i = 0; i < n; ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) throw std::runtime_error("load_weights: truncated file");
        uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        lw.params[i] = f;
    }
    return lw;
}

inline EmbeddingModel load_embedding_model(const std::filesystem::path& path) {
    LoadedWeights lw = load_weights(path);
    EmbeddingModel m;
    if (lw.header.at("architecture") != m.net().describe())
        throw std::runtime_error("load_embedding_model: architecture mismatch");
    m.set_params(std::move(lw.params));
    m.set_seed(lw.header.at("seed"));
    return m;
}

// ---------------------------------------------------------------------------
// Triplet construction

// Per (parcel, t) cell: prepared anchor/positive tensors and the attack pool.
struct Cell {
    int i = 0, j = 0, t = 0;
    nn::Vec anchor;                       // prepared satellite tensor
    std::vector<nn::Vec> positives;       // prepared truthful drone tensors
    std::vector<nn::Vec> negatives;       // prepared attack tensors
    std::vector<std::string> negativeLabels;
};

struct CellBank {
    std::vector<Cell> cells;
};

// Prepares tensors for every cell of an attacked dataset. Negatives with
// label "adversarial"/"combined" are dropped when includeAdversarial is off.
inline CellBank build_cell_bank(const Dataset& ds, bool includeAdversarial = true) {
    std::map<CellKey, Cell> byCell;
    for (const auto& [key, sat] : ds.satellites) {
        auto [i, j, t] = key;
        Cell c;
        c.i = i;
        c.j = j;
        c.t = t;
        c.anchor = nn::prepare_encoder_input(sat);
        byCell[key] = std::move(c);
    }
    for (const auto& s : ds.submissions) {
        auto it = byCell.find({s.claimedI, s.claimedJ, s.claimedT});
        if (it == byCell.end()) continue;
        nn::Vec prep = nn::prepare_encoder_input(s.image);
        if (s.label == "truthful") {
            it->second.positives.push_back(std::move(prep));
        } else {
            if (!includeAdversarial && (s.label == "adversarial" || s.label == "combined"))
                continue;
            it->second.negatives.push_back(std::move(prep));
            it->second.negativeLabels.push_back(s.label);
        }
    }
    CellBank bank;
    for (auto& [key, c] : byCell) bank.cells.push_back(std::move(c));
    return bank;
}

enum class MiningPolicy { random, semi_hard };

struct TripletRef {
    const nn::Vec* anchor;
    const nn::Vec* positive;
    const nn::Vec* negative;
};

struct TripletSet {
    std::vector<TripletRef> triplets;
    int skippedCells = 0; // cells without attacks
};

// One triplet per (anchor, positive) pair. `random` draws the negative
// uniformly from the cell's attack pool; `semi_hard` picks the closest
// negative still farther than the positive, falling back to the hardest.
inline TripletSet make_triplets(const CellBank& bank, MiningPolicy policy, uint64_t seed,
                                const EmbeddingModel* model = nullptr) {
    if (policy == MiningPolicy::semi_hard && model == nullptr)
        throw std::invalid_argument("make_triplets: semi_hard needs a model snapshot");
    TripletSet out;
    SplitMix64 g(derive_seed(seed, kTripletSampling));
    for (const auto& c : bank.cells) {
        if (c.negatives.empty() || c.positives.empty()) {
            ++out.skippedCells;
            continue;
        }
        nn::Vec ea;
        std::vector<nn::Vec> en;
        if (policy == MiningPolicy::semi_hard) {
            ea = model->embed_prepared(c.anchor);
            for (const auto& n : c.negatives) en.push_back(model->embed_prepared(n));
        }
        for (const auto& p : c.positives) {
            size_t pick = 0;
            if (policy == MiningPolicy::random) {
                pick = static_cast<size_t>(g.below(c.negatives.size()));
            } else {
                double dap = squared_distance(ea, model->embed_prepared(p));
                double bestSemi = std::numeric_limits<double>::infinity();
                double bestHard = std::numeric_limits<double>::infinity();
                size_t semiIdx = c.negatives.size(), hardIdx = 0;
                for (size_t k = 0; k < en.size(); ++k) {
                    double dan = squared_distance(ea, en[k]);
                    if (dan > dap && dan < bestSemi) {
                        bestSemi = dan;
                        semiIdx = k;
                    }
                    if (dan < bestHard) {
                        bestHard = dan;
                        hardIdx = k;
                    }
                }
                pick = semiIdx < c.negatives.size() ? semiIdx : hardIdx;
            }
            out.triplets.push_back({&c.anchor, &p, &c.negatives[pick]});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double margin = 0.2;
    double learningRate = 1e-3;
    int batchSize = 64;
    int maxEpochs = 300;
    MiningPolicy mining = MiningPolicy::random;
    uint64_t seed = 7;
    int patience = 40;             // early stop on validation margin
    bool includeAdversarial = true;
};

// mean(||a-n||^2) - mean(||a-p||^2) over all (positive, negative) usages
inline double validation_margin(const EmbeddingModel& m, const CellBank& bank) {
    double sumP = 0.0, sumN = 0.0;
    long nP = 0, nN = 0;
    for (const auto& c : bank.cells) {
        nn::Vec ea = m.embed_prepared(c.anchor);
        for (const auto& p : c.positives) {
            sumP += squared_distance(ea, m.embed_prepared(p));
            ++nP;
        }
        for (const auto& n : c.negatives) {
            sumN += squared_distance(ea, m.embed_prepared(n));
            ++nN;
        }
    }
    if (nP == 0 || nN == 0) return 0.0;
    return sumN / nN - sumP / nP;
}

// Adam-optimized triplet training. Returns the best-validation-margin
// snapshot; deterministic given cfg.seed (single-threaded, fixed order).
inline EmbeddingModel train_metric(const CellBank& train, const CellBank& val,
                                   const TrainConfig& cfg) {
    if (cfg.margin <= 0.0) throw std::invalid_argument("train_metric: margin must be > 0");
    if (cfg.batchSize < 1) throw std::invalid_argument("train_metric: batchSize must be >= 1");
    EmbeddingModel model(cfg.seed);
    const nn::Network& net = model.net();
    nn::Vec params = model.params();
    nn::AdamState adam;

    nn::Vec bestParams = params;
    double bestMargin = -std::numeric_limits<double>::infinity();
    int sinceBest = 0;

    for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
        model.set_params(params);
        TripletSet ts = make_triplets(train, cfg.mining,
                                      derive_seed(cfg.seed, static_cast<uint64_t>(epoch)),
                                      &model);
        if (ts.triplets.empty()) throw std::runtime_error("train_metric: no valid triplets");

        double epochLoss = 0.0;
        const int n = static_cast<int>(ts.triplets.size());
        for (int start = 0; start < n; start += cfg.batchSize) {
            int end = std::min(start + cfg.batchSize, n);
            nn::Vec grads(net.param_count(), 0.0);
            double scale = 1.0 / (end - start);
            for (int k = start; k < end; ++k) {
                const TripletRef& tr = ts.triplets[k];
                std::vector<nn::Vec> ta, tp, tn;
                nn::Vec ea = net.forward(params, *tr.anchor, &ta);
                nn::Vec ep = net.forward(params, *tr.positive, &tp);
                nn::Vec en = net.forward(params, *tr.negative, &tn);
                double hinge = squared_distance(ea, ep) - squared_distance(ea, en) + cfg.margin;
                if (hinge <= 0.0) continue;
                epochLoss += hinge;
                nn::Vec da(ea.size()), dp(ea.size()), dn(ea.size());
                for (size_t i = 0; i < ea.size(); ++i) {
                    da[i] = 2.0 * (en[i] - ep[i]) * scale;
                    dp[i] = -2.0 * (ea[i] - ep[i]) * scale;
                    dn[i] = 2.0 * (ea[i] - en[i]) * scale;
                }
                net.backward(params, ta, std::move(da), &grads);
                net.backward(params, tp, std::move(dp), &grads);
                net.backward(params, tn, std::move(dn), &grads);
            }
            nn::adam_step(params, grads, adam, cfg.learningRate);
        }
        // hinge of skipped (inactive) triplets contributes 0
        epochLoss /= n;

        model.set_params(params);
        double margin = validation_margin(model, val);
        model.history.push_back({epoch, epochLoss, margin});

        if (margin > bestMargin) {
            bestMargin = margin;
            bestParams = params;
            sinceBest = 0;
        } else if (++sinceBest >= cfg.patience) {
            break;
        }
    }

    EmbeddingModel best(cfg.seed);
    best.set_params(std::move(bestParams));
    best.history = model.history;
    return best;
}

// ---------------------------------------------------------------------------
// Run artifacts

inline void save_history_csv(const std::filesystem::path& path,
                             const std::vector<EpochRecord>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_history_csv: cannot open " + path.string());
    out << "epoch,trainLoss,valMargin\n";
    char buf[128];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch, r.trainLoss, r.valMargin);
        out << buf;
    }
}

} // namespace veriforest
