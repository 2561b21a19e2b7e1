#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "veriforest/dataset.hpp"
#include "veriforest/nnet.hpp"
#include "veriforest/raster.hpp"

namespace veriforest {

// MSE after box-downsampling the drone image to the satellite grid.
inline double pixel_distance(const Raster& drone, const Raster& sat) {
    if (drone.height % sat.height != 0 || drone.width % sat.width != 0)
        throw std::invalid_argument("pixel_distance: non-integral resolution ratio");
    return mse(resample(drone, sat.height, sat.width, ResampleMode::box), sat);
}

// ---------------------------------------------------------------------------
// Fixed feature extractor: the encoder trunk with a 3-way cover-bucket head,
// trained on satellite renders. The 32-d penultimate (global-average-pool)
// activation is the feature vector.

struct ClassifierTrainConfig {
    int epochs = 30;
    double learningRate = 1e-3;
    int batchSize = 16;
    uint64_t seed = 23;
};

inline int cover_bucket(double cover) { return cover < 1.0 / 3 ? 0 : (cover < 2.0 / 3 ? 1 : 2); }

class FeatureExtractor {
public:
    FeatureExtractor() : net_(nn::make_cover_classifier_net(nn::kEncoderInputEdge)) {
        // locate the global-average-pool output in the trace
        gapTraceIdx_ = -1;
        // trace[k+1] is the output of layer k; the GAP layer is the one whose
        // output shape is 1x1x32 followed by the dense head
        for (size_t k = 0; k + 1 < net_.shapes().size(); ++k)
            if (net_.shapes()[k + 1] == nn::Shape{1, 1, nn::kTrunkFeatureDim})
                gapTraceIdx_ = static_cast<int>(k + 1);
        if (gapTraceIdx_ < 0) throw std::logic_error("FeatureExtractor: GAP layer not found");
    }

    bool trained() const { return !params_.empty(); }
    const nn::Network& net() const { return net_; }
    const nn::Vec& params() const { return params_; }
    void set_params(nn::Vec p) { params_ = std::move(p); }

    // 32-d penultimate activation of the aligned, standardized image
    nn::Vec features(const Raster& img) const {
        if (!trained()) throw std::runtime_error("FeatureExtractor: untrained");
        std::vector<nn::Vec> trace;
        net_.forward(params_, align_to(img, nn::kEncoderInputEdge).data, &trace);
        return trace[gapTraceIdx_];
    }

    nn::Vec logits(const Raster& img) const {
        if (!trained()) throw std::runtime_error("FeatureExtractor: untrained");
        return net_.forward(params_, align_to(img, nn::kEncoderInputEdge).data);
    }

private:
    nn::Network net_;
    nn::Vec params_;
    int gapTraceIdx_;
};

// Softmax cross-entropy training on (satellite tile, cover bucket) pairs.
inline FeatureExtractor train_feature_extractor(
    const std::vector<std::pair<const Raster*, double>>& tiles,
    const ClassifierTrainConfig& cfg) {
    if (tiles.empty()) throw std::invalid_argument("train_feature_extractor: empty dataset");
    FeatureExtractor fx;
    const nn::Network& net = fx.net();
    nn::Vec params = net.init_params(cfg.seed);
    nn::AdamState adam;

    std::vector<nn::Vec> inputs;
    std::vector<int> labels;
    for (const auto& [img, cover] : tiles) {
        inputs.push_back(align_to(*img, nn::kEncoderInputEdge).data);
        labels.push_back(cover_bucket(cover));
    }

    const int n = static_cast<int>(inputs.size());
    const int batch = std::min(cfg.batchSize, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 sg(derive_seed(cfg.seed, kShuffle, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<int>(sg.below(i + 1))]);
        for (int start = 0; start < n; start += batch) {
            int end = std::min(start + batch, n);
            nn::Vec grads(net.param_count(), 0.0);
            double scale = 1.0 / (end - start);
            for (int k = start; k < end; ++k) {
                int idx = order[k];
                std::vector<nn::Vec> trace;
                nn::Vec z = net.forward(params, inputs[idx], &trace);
                double zmax = *std::max_element(z.begin(), z.end());
                double denom = 0.0;
                for (double v : z) denom += std::exp(v - zmax);
                nn::Vec dout(z.size());
                for (size_t c = 0; c < z.size(); ++c) {
                    double p = std::exp(z[c] - zmax) / denom;
                    dout[c] = (p - (static_cast<int>(c) == labels[idx] ? 1.0 : 0.0)) * scale;
                }
                net.backward(params, trace, std::move(dout), &grads);
            }
            nn::adam_step(params, grads, adam, cfg.learningRate);
        }
    }
    fx.set_params(std::move(params));
    return fx;
}

inline FeatureExtractor train_feature_extractor(const Dataset& ds,
                                                const ClassifierTrainConfig& cfg) {
    std::vector<std::pair<const Raster*, double>> tiles;
    for (const auto& [key, img] : ds.satellites) {
        auto [i, j, t] = key;
        tiles.emplace_back(&img, ds.cover_of(i, j, t));
    }
    return train_feature_extractor(tiles, cfg);
}

// MSE between the 32-d features of the aligned, standardized inputs.
inline double feature_distance(const FeatureExtractor& fx, const Raster& drone,
                               const Raster& sat) {
    nn::Vec a = fx.features(drone);
    nn::Vec b = fx.features(sat);
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// 2-D projection for the cluster plot

enum class ProjectionMethod { pca, tsne };

struct ProjectionResult {
    std::vector<std::array<double, 2>> coords;
    std::vector<double> singularValues; // all singular values of the centered matrix
};

// PCA onto the top-2 right singular directions. Sign convention: the first
// loading with magnitude > 1e-12 is positive.
inline ProjectionResult project2d(const std::vector<std::vector<double>>& points,
                                  ProjectionMethod method = ProjectionMethod::pca) {
    if (method == ProjectionMethod::tsne)
        throw std::invalid_argument(
            "project2d: tsne is not implemented; use pca (the supported projection)");
    if (points.size() < 3)
        throw std::invalid_argument("project2d: pca needs at least 3 points");
    const int n = static_cast<int>(points.size());
    const int d = static_cast<int>(points[0].size());
    Eigen::MatrixXd X(n, d);
    for (int r = 0; r < n; ++r) {
        if (static_cast<int>(points[r].size()) != d)
            throw std::invalid_argument("project2d: ragged input");
        for (int c = 0; c < d; ++c) X(r, c) = points[r][c];
    }
    Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd V = svd.matrixV();
    if (V.cols() < 2) {
        // rank-deficient in the thin sense only when d < 2; pad with zeros
        Eigen::MatrixXd V2 = Eigen::MatrixXd::Zero(d, 2);
        V2.leftCols(V.cols()) = V;
        V = V2;
    }
    for (int c = 0; c < 2; ++c) {
        for (int r = 0; r < d; ++r) {
            if (std::abs(V(r, c)) > 1e-12) {
                if (V(r, c) < 0.0) V.col(c) = -V.col(c);
                break;
            }
        }
    }

    ProjectionResult res;
    Eigen::MatrixXd Y = X * V.leftCols(2);
    res.coords.resize(n);
    for (int r = 0; r < n; ++r) res.coords[r] = {Y(r, 0), Y(r, 1)};
    res.singularValues.assign(svd.singularValues().data(),
                              svd.singularValues().data() + svd.singularValues().size());
    return res;
}

} // namespace veriforest
