#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "veriforest/raster.hpp"
#include "veriforest/rng.hpp"

namespace veriforest::nn {

using Vec = std::vector<double>;

struct Shape {
    int h = 1, w = 1, c = 1;
    int size() const { return h * w * c; }
    bool operator==(const Shape&) const = default;
};

inline void check_finite(const Vec& v, const char* where) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value in ") + where);
}

// One differentiable layer. Layers are stateless; parameters live in a flat
// vector owned by the caller, activations in a per-pass trace.
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string name() const = 0;
    virtual Shape out_shape(const Shape& in) const = 0;
    virtual int param_count(const Shape& /*in*/) const { return 0; }
    virtual void init_params(const Shape& /*in*/, double* /*p*/, SplitMix64& /*g*/) const {}
    virtual void forward(const double* p, const Shape& in, const Vec& x, Vec& y) const = 0;
    // dp may be null when only the input gradient is needed; accumulates into dp.
    virtual void backward(const double* p, const Shape& in, const Vec& x, const Vec& y,
                          const Vec& dy, double* dp, Vec& dx) const = 0;
};

class Conv3x3 : public Layer {
public:
    Conv3x3(int inC, int outC) : inC_(inC), outC_(outC) {}
    std::string name() const override {
        return "conv3x3:" + std::to_string(inC_) + "-" + std::to_string(outC_);
    }
    Shape out_shape(const Shape& in) const override { return {in.h, in.w, outC_}; }
    int param_count(const Shape&) const override { return outC_ * inC_ * 9 + outC_; }
    void init_params(const Shape&, double* p, SplitMix64& g) const override {
        double s = std::sqrt(1.0 / (inC_ * 9));
        int nw = outC_ * inC_ * 9;
        for (int i = 0; i < nw; ++i) p[i] = g.uniform(-s, s);
        for (int i = 0; i < outC_; ++i) p[nw + i] = 0.0;
    }
    // weights laid out [oc][ic][ky][kx], then biases [oc]
    void forward(const double* p, const Shape& in, const Vec& x, Vec& y) const override {
        const double* bias = p + outC_ * inC_ * 9;
        y.assign(static_cast<size_t>(in.h) * in.w * outC_, 0.0);
        for (int yy = 0; yy < in.h; ++yy)
            for (int xx = 0; xx < in.w; ++xx) {
                double* yo = &y[(static_cast<size_t>(yy) * in.w + xx) * outC_];
                for (int oc = 0; oc < outC_; ++oc) yo[oc] = bias[oc];
                for (int ky = 0; ky < 3; ++ky) {
                    int sy = yy + ky - 1;
                    if (sy < 0 || sy >= in.h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int sx = xx + kx - 1;
                        if (sx < 0 || sx >= in.w) continue;
                        const double* xi = &x[(static_cast<size_t>(sy) * in.w + sx) * inC_];
                        for (int ic = 0; ic < inC_; ++ic) {
                            double xv = xi[ic];
                            const double* wrow = p + ((0 * inC_ + ic) * 9 + ky * 3 + kx);
                            // stride between consecutive oc for fixed (ic,ky,kx) is inC_*9
                            for (int oc = 0; oc < outC_; ++oc)
                                yo[oc] += wrow[static_cast<size_t>(oc) * inC_ * 9] * xv;
                        }
                    }
                }
            }
    }
    void backward(const double* p, const Shape& in, const Vec& x, const Vec&,
                  const Vec& dy, double* dp, Vec& dx) const override {
        dx.assign(x.size(), 0.0);
        double* dbias = dp ? dp + outC_ * inC_ * 9 : nullptr;
        for (int yy = 0; yy < in.h; ++yy)
            for (int xx = 0; xx < in.w; ++xx) {
                const double* go = &dy[(static_cast<size_t>(yy) * in.w + xx) * outC_];
                if (dbias)
                    for (int oc = 0; oc < outC_; ++oc) dbias[oc] += go[oc];
                for (int ky = 0; ky < 3; ++ky) {
                    int sy = yy + ky - 1;
                    if (sy < 0 || sy >= in.h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int sx = xx + kx - 1;
                        if (sx < 0 || sx >= in.w) continue;
                        const double* xi = &x[(static_cast<size_t>(sy) * in.w + sx) * inC_];
                        double* dxi = &dx[(static_cast<size_t>(sy) * in.w + sx) * inC_];
                        for (int ic = 0; ic < inC_; ++ic) {
                            size_t wbase = (static_cast<size_t>(ic)) * 9 + ky * 3 + kx;
                            double accdx = 0.0;
                            for (int oc = 0; oc < outC_; ++oc) {
                                size_t wi = static_cast<size_t>(oc) * inC_ * 9 + wbase;
                                accdx += p[wi] * go[oc];
                                if (dp) dp[wi] += xi[ic] * go[oc];
                            }
                            dxi[ic] += accdx;
                        }
                    }
                }
            }
    }

private:
    int inC_, outC_;
};

class ReLU : public Layer {
public:
    std::string name() const override { return "relu"; }
    Shape out_shape(const Shape& in) const override { return in; }
    void forward(const double*, const Shape&, const Vec& x, Vec& y) const override {
        y.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
    void backward(const double*, const Shape&, const Vec& x, const Vec&,
                  const Vec& dy, double*, Vec& dx) const override {
        dx.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
    }
};

class AvgPool2 : public Layer {
public:
    std::string name() const override { return "avgpool2"; }
    Shape out_shape(const Shape& in) const override {
        if (in.h % 2 != 0 || in.w % 2 != 0)
            throw std::invalid_argument("avgpool2: odd input dims");
        return {in.h / 2, in.w / 2, in.c};
    }
    void forward(const double*, const Shape& in, const Vec& x, Vec& y) const override {
        int oh = in.h / 2, ow = in.w / 2;
        y.assign(static_cast<size_t>(oh) * ow * in.c, 0.0);
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx)
                for (int c = 0; c < in.c; ++c) {
                    double acc = 0.0;
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2)
                            acc += x[(static_cast<size_t>(yy * 2 + dy2) * in.w + xx * 2 + dx2) * in.c + c];
                    y[(static_cast<size_t>(yy) * ow + xx) * in.c + c] = acc * 0.25;
                }
    }
    void backward(const double*, const Shape& in, const Vec& x, const Vec&,
                  const Vec& dy, double*, Vec& dx) const override {
        int ow = in.w / 2;
        dx.assign(x.size(), 0.0);
        for (size_t i = 0; i < x.size(); ++i) {
            int c = static_cast<int>(i % in.c);
            int px = static_cast<int>(i / in.c) % in.w;
            int py = static_cast<int>(i / in.c) / in.w;
            dx[i] = 0.25 * dy[(static_cast<size_t>(py / 2) * ow + px / 2) * in.c + c];
        }
    }
};

class GlobalAvgPool : public Layer {
public:
    std::string name() const override { return "gap"; }
    Shape out_shape(const Shape& in) const override { return {1, 1, in.c}; }
    void forward(const double*, const Shape& in, const Vec& x, Vec& y) const override {
        y.assign(in.c, 0.0);
        int n = in.h * in.w;
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < in.c; ++c) y[c] += x[static_cast<size_t>(i) * in.c + c];
        for (int c = 0; c < in.c; ++c) y[c] /= n;
    }
    void backward(const double*, const Shape& in, const Vec& x, const Vec&,
                  const Vec& dy, double*, Vec& dx) const override {
        int n = in.h * in.w;
        dx.resize(x.size());
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < in.c; ++c) dx[static_cast<size_t>(i) * in.c + c] = dy[c] / n;
    }
};

class Dense : public Layer {
public:
    Dense(int in, int out) : in_(in), out_(out) {}
    std::string name() const override {
        return "dense:" + std::to_string(in_) + "-" + std::to_string(out_);
    }
    Shape out_shape(const Shape& in) const override {
        if (in.size() != in_) throw std::invalid_argument("dense: input size mismatch");
        return {1, 1, out_};
    }
    int param_count(const Shape&) const override { return out_ * in_ + out_; }
    void init_params(const Shape&, double* p, SplitMix64& g) const override {
        double s = std::sqrt(1.0 / in_);
        for (int i = 0; i < out_ * in_; ++i) p[i] = g.uniform(-s, s);
        for (int i = 0; i < out_; ++i) p[out_ * in_ + i] = 0.0;
    }
    void forward(const double* p, const Shape&, const Vec& x, Vec& y) const override {
        const double* b = p + out_ * in_;
        y.resize(out_);
        for (int o = 0; o < out_; ++o) {
            double acc = b[o];
            const double* w = p + static_cast<size_t>(o) * in_;
            for (int i = 0; i < in_; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
    }
    void backward(const double* p, const Shape&, const Vec& x, const Vec&,
                  const Vec& dy, double* dp, Vec& dx) const override {
        dx.assign(in_, 0.0);
        for (int o = 0; o < out_; ++o) {
            const double* w = p + static_cast<size_t>(o) * in_;
            double g = dy[o];
            for (int i = 0; i < in_; ++i) dx[i] += w[i] * g;
            if (dp) {
                double* dw = dp + static_cast<size_t>(o) * in_;
                for (int i = 0; i < in_; ++i) dw[i] += x[i] * g;
                dp[static_cast<size_t>(out_) * in_ + o] += g;
            }
        }
    }

private:
    int in_, out_;
};

// L2 normalization onto the unit sphere. The exactly-zero input maps to the
// first basis vector with zero gradient, making the op total.
class L2Normalize : public Layer {
public:
    std::string name() const override { return "l2norm"; }
    Shape out_shape(const Shape& in) const override { return in; }
    void forward(const double*, const Shape&, const Vec& x, Vec& y) const override {
        double n2 = 0.0;
        for (double v : x) n2 += v * v;
        y.resize(x.size());
        if (n2 == 0.0) {
            std::fill(y.begin(), y.end(), 0.0);
            y[0] = 1.0;
            return;
        }
        double inv = 1.0 / std::sqrt(n2);
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv;
    }
    void backward(const double*, const Shape&, const Vec& x, const Vec& y,
                  const Vec& dy, double*, Vec& dx) const override {
        double n2 = 0.0;
        for (double v : x) n2 += v * v;
        dx.assign(x.size(), 0.0);
        if (n2 == 0.0) return;
        double n = std::sqrt(n2);
        double dot = 0.0;
        for (size_t i = 0; i < x.size(); ++i) dot += y[i] * dy[i];
        for (size_t i = 0; i < x.size(); ++i) dx[i] = (dy[i] - y[i] * dot) / n;
    }
};

class Sigmoid : public Layer {
public:
    std::string name() const override { return "sigmoid"; }
    Shape out_shape(const Shape& in) const override { return in; }
    void forward(const double*, const Shape&, const Vec& x, Vec& y) const override {
        y.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    }
    void backward(const double*, const Shape&, const Vec&, const Vec& y,
                  const Vec& dy, double*, Vec& dx) const override {
        dx.resize(y.size());
        for (size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
    }
};

// Mean over k x k blocks; linear, used to bring drone imagery to encoder size.
class BoxDown : public Layer {
public:
    explicit BoxDown(int k) : k_(k) {}
    std::string name() const override { return "boxdown:" + std::to_string(k_); }
    Shape out_shape(const Shape& in) const override {
        if (in.h % k_ != 0 || in.w % k_ != 0)
            throw std::invalid_argument("boxdown: non-integral ratio");
        return {in.h / k_, in.w / k_, in.c};
    }
    void forward(const double*, const Shape& in, const Vec& x, Vec& y) const override {
        int oh = in.h / k_, ow = in.w / k_;
        double inv = 1.0 / (k_ * k_);
        y.assign(static_cast<size_t>(oh) * ow * in.c, 0.0);
        for (int yy = 0; yy < in.h; ++yy)
            for (int xx = 0; xx < in.w; ++xx)
                for (int c = 0; c < in.c; ++c)
                    y[(static_cast<size_t>(yy / k_) * ow + xx / k_) * in.c + c] +=
                        x[(static_cast<size_t>(yy) * in.w + xx) * in.c + c] * inv;
    }
    void backward(const double*, const Shape& in, const Vec& x, const Vec&,
                  const Vec& dy, double*, Vec& dx) const override {
        int ow = in.w / k_;
        double inv = 1.0 / (k_ * k_);
        dx.resize(x.size());
        for (int yy = 0; yy < in.h; ++yy)
            for (int xx = 0; xx < in.w; ++xx)
                for (int c = 0; c < in.c; ++c)
                    dx[(static_cast<size_t>(yy) * in.w + xx) * in.c + c] =
                        dy[(static_cast<size_t>(yy / k_) * ow + xx / k_) * in.c + c] * inv;
    }

private:
    int k_;
};

class NearestUp : public Layer {
public:
    explicit NearestUp(int k) : k_(k) {}
    std::string name() const override { return "nearestup:" + std::to_string(k_); }
    Shape out_shape(const Shape& in) const override { return {in.h * k_, in.w * k_, in.c}; }
    void forward(const double*, const Shape& in, const Vec& x, Vec& y) const override {
        int oh = in.h * k_, ow = in.w * k_;
        y.resize(static_cast<size_t>(oh) * ow * in.c);
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx)
                for (int c = 0; c < in.c; ++c)
                    y[(static_cast<size_t>(yy) * ow + xx) * in.c + c] =
                        x[(static_cast<size_t>(yy / k_) * in.w + xx / k_) * in.c + c];
    }
    void backward(const double*, const Shape& in, const Vec& x, const Vec&,
                  const Vec& dy, double*, Vec& dx) const override {
        int ow = in.w * k_;
        dx.assign(x.size(), 0.0);
        for (int yy = 0; yy < in.h * k_; ++yy)
            for (int xx = 0; xx < ow; ++xx)
                for (int c = 0; c < in.c; ++c)
                    dx[(static_cast<size_t>(yy / k_) * in.w + xx / k_) * in.c + c] +=
                        dy[(static_cast<size_t>(yy) * ow + xx) * in.c + c];
    }

private:
    int k_;
};

// Per-channel zero-mean unit-std (population), as a differentiable layer so
// gradients reach the raw image in white-box attacks. Constant channels map
// to zeros with zero gradient.
class Standardize : public Layer {
public:
    std::string name() const override { return "standardize"; }
    Shape out_shape(const Shape& in) const override { return in; }
    void forward(const double*, const Shape& in, const Vec& x, Vec& y) const override {
        int n = in.h * in.w;
        y.resize(x.size());
        for (int c = 0; c < in.c; ++c) {
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += x[static_cast<size_t>(i) * in.c + c];
            mean /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) {
                double d = x[static_cast<size_t>(i) * in.c + c] - mean;
                var += d * d;
            }
            double sd = std::sqrt(var / n);
            if (sd < 1e-12) sd = 0.0;
            for (int i = 0; i < n; ++i) {
                size_t k = static_cast<size_t>(i) * in.c + c;
                y[k] = sd == 0.0 ? 0.0 : (x[k] - mean) / sd;
            }
        }
    }
    void backward(const double*, const Shape& in, const Vec& x, const Vec& y,
                  const Vec& dy, double*, Vec& dx) const override {
        int n = in.h * in.w;
        dx.assign(x.size(), 0.0);
        for (int c = 0; c < in.c; ++c) {
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += x[static_cast<size_t>(i) * in.c + c];
            mean /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) {
                double d = x[static_cast<size_t>(i) * in.c + c] - mean;
                var += d * d;
            }
            double sd = std::sqrt(var / n);
            if (sd < 1e-12) continue;
            double gmean = 0.0, gydot = 0.0;
            for (int i = 0; i < n; ++i) {
                size_t k = static_cast<size_t>(i) * in.c + c;
                gmean += dy[k];
                gydot += dy[k] * y[k];
            }
            gmean /= n;
            gydot /= n;
            for (int i = 0; i < n; ++i) {
                size_t k = static_cast<size_t>(i) * in.c + c;
                dx[k] = (dy[k] - gmean - y[k] * gydot) / sd;
            }
        }
    }
};

// A fixed feed-forward stack over a flat parameter vector.
class Network {
public:
    Network(Shape input, std::vector<std::unique_ptr<Layer>> layers)
        : layers_(std::move(layers)) {
        shapes_.push_back(input);
        for (auto& l : layers_) {
            offsets_.push_back(nParams_);
            nParams_ += l->param_count(shapes_.back());
            shapes_.push_back(l->out_shape(shapes_.back()));
        }
    }

    int param_count() const { return nParams_; }
    Shape input_shape() const { return shapes_.front(); }
    Shape output_shape() const { return shapes_.back(); }
    size_t layer_count() const { return layers_.size(); }
    const std::vector<Shape>& shapes() const { return shapes_; }

    std::string describe() const {
        std::string s;
        for (size_t i = 0; i < layers_.size(); ++i) {
            if (i) s += "|";
            s += layers_[i]->name();
        }
        return s;
    }

    // Fan-in-scaled uniform init, seeded; biases zero.
    Vec init_params(uint64_t seed) const {
        Vec p(nParams_, 0.0);
        for (size_t i = 0; i < layers_.size(); ++i) {
            if (layers_[i]->param_count(shapes_[i]) == 0) continue;
            SplitMix64 g(derive_seed(seed, kParamInit, static_cast<uint64_t>(i)));
            layers_[i]->init_params(shapes_[i], p.data() + offsets_[i], g);
        }
        return p;
    }

    // trace, when given, receives all activations: trace[0] = input,
    // trace[i+1] = output of layer i.
    Vec forward(const Vec& params, const Vec& input, std::vector<Vec>* trace = nullptr) const {
        if (static_cast<int>(params.size()) != nParams_)
            throw std::invalid_argument("forward: parameter count mismatch");
        if (static_cast<int>(input.size()) != shapes_.front().size())
            throw std::invalid_argument("forward: input size mismatch");
        if (trace) {
            trace->clear();
            trace->push_back(input);
        }
        Vec cur = input, next;
        for (size_t i = 0; i < layers_.size(); ++i) {
            layers_[i]->forward(params.data() + offsets_[i], shapes_[i], cur, next);
            for (double v : next)
                if (!std::isfinite(v))
                    throw std::runtime_error("forward: non-finite activation in layer " +
                                             layers_[i]->name());
            if (trace) trace->push_back(next);
            cur.swap(next);
        }
        return cur;
    }

    // Reverse pass from dLoss/dOutput. Accumulates parameter gradients into
    // *dparams (when non-null, sized param_count) and returns dLoss/dInput.
    Vec backward(const Vec& params, const std::vector<Vec>& trace, Vec dout,
                 Vec* dparams) const {
        if (trace.size() != layers_.size() + 1)
            throw std::invalid_argument("backward: bad trace");
        if (dparams && static_cast<int>(dparams->size()) != nParams_)
            throw std::invalid_argument("backward: dparams size mismatch");
        Vec dx;
        for (size_t i = layers_.size(); i-- > 0;) {
            double* dp = dparams ? dparams->data() + offsets_[i] : nullptr;
            layers_[i]->backward(params.data() + offsets_[i], shapes_[i], trace[i],
                                 trace[i + 1], dout, dp, dx);
            dout.swap(dx);
        }
        return dout;
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Shape> shapes_;
    std::vector<int> offsets_;
    int nParams_ = 0;
};

namespace detail {
inline void push_trunk(std::vector<std::unique_ptr<Layer>>& ls) {
    ls.push_back(std::make_unique<Conv3x3>(3, 8));
    ls.push_back(std::make_unique<ReLU>());
    ls.push_back(std::make_unique<AvgPool2>());
    ls.push_back(std::make_unique<Conv3x3>(8, 16));
    ls.push_back(std::make_unique<ReLU>());
    ls.push_back(std::make_unique<AvgPool2>());
    ls.push_back(std::make_unique<Conv3x3>(16, 32));
    ls.push_back(std::make_unique<ReLU>());
    ls.push_back(std::make_unique<GlobalAvgPool>());
}

// Prepends resample-to-32 + standardize so the network consumes raw rasters.
inline void push_preproc(std::vector<std::unique_ptr<Layer>>& ls, int inputEdge) {
    if (inputEdge > 32) {
        if (inputEdge % 32 != 0) throw std::invalid_argument("inputEdge must divide by 32");
        ls.push_back(std::make_unique<BoxDown>(inputEdge / 32));
    } else if (inputEdge < 32) {
        if (32 % inputEdge != 0) throw std::invalid_argument("inputEdge must divide 32");
        ls.push_back(std::make_unique<NearestUp>(32 / inputEdge));
    }
    ls.push_back(std::make_unique<Standardize>());
}
} // namespace detail

constexpr int kEncoderInputEdge = 32;
constexpr int kEmbeddingDim = 16;
constexpr int kTrunkFeatureDim = 32;

// 32x32x3 standardized input -> 16-d unit embedding.
inline Network make_encoder() {
    std::vector<std::unique_ptr<Layer>> ls;
    detail::push_trunk(ls);
    ls.push_back(std::make_unique<Dense>(32, kEmbeddingDim));
    ls.push_back(std::make_unique<L2Normalize>());
    return Network({32, 32, 3}, std::move(ls));
}

// Raw inputEdge x inputEdge raster -> 16-d unit embedding. Parameter layout
// is identical to make_encoder(), so weights are interchangeable.
inline Network make_encoder_pipeline(int inputEdge) {
    std::vector<std::unique_ptr<Layer>> ls;
    detail::push_preproc(ls, inputEdge);
    detail::push_trunk(ls);
    ls.push_back(std::make_unique<Dense>(32, kEmbeddingDim));
    ls.push_back(std::make_unique<L2Normalize>());
    return Network({inputEdge, inputEdge, 3}, std::move(ls));
}

// Raw raster -> predicted forest-cover fraction in [0,1].
inline Network make_cover_regressor_net(int inputEdge) {
    std::vector<std::unique_ptr<Layer>> ls;
    detail::push_preproc(ls, inputEdge);
    detail::push_trunk(ls);
    ls.push_back(std::make_unique<Dense>(32, 1));
    ls.push_back(std::make_unique<Sigmoid>());
    return Network({inputEdge, inputEdge, 3}, std::move(ls));
}

// Raw raster -> 3 cover-bucket logits. The 32-d global-average-pool
// activation (penultimate) serves as the fixed feature vector.
inline Network make_cover_classifier_net(int inputEdge) {
    std::vector<std::unique_ptr<Layer>> ls;
    detail::push_preproc(ls, inputEdge);
    detail::push_trunk(ls);
    ls.push_back(std::make_unique<Dense>(32, 3));
    return Network({inputEdge, inputEdge, 3}, std::move(ls));
}

struct AdamState {
    Vec m, v;
    long t = 0;
};

inline void adam_step(Vec& params, const Vec& grads, AdamState& st, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
    check_finite(params, "adam params");
    check_finite(grads, "adam grads");
    if (st.m.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    st.t += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grads[i];
        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        double mhat = st.m[i] / bc1;
        double vhat = st.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

struct GradCheckReport {
    double maxRelError = 0.0;
    int coordsChecked = 0;
    bool pass = false;
};

// Central finite differences against the reverse-mode gradient on a
// fixed-target squared-error loss (exercises every layer incl. the
// normalization Jacobian). Checks a seeded coordinate sample.
inline GradCheckReport gradient_check(const Network& net, const Vec& params,
                                      const std::vector<Vec>& batch, double h, double tol,
                                      int sampleCoords = 200, uint64_t seed = 0) {
    const int outDim = net.output_shape().size();
    SplitMix64 g(derive_seed(seed, kGradCheck));
    std::vector<Vec> targets;
    for (size_t b = 0; b < batch.size(); ++b) {
        Vec t(outDim);
        double n2 = 0.0;
        for (int i = 0; i < outDim; ++i) {
            t[i] = g.uniform(-1.0, 1.0);
            n2 += t[i] * t[i];
        }
        for (int i = 0; i < outDim; ++i) t[i] /= std::sqrt(n2);
        targets.push_back(std::move(t));
    }
    auto loss = [&](const Vec& p) {
        double acc = 0.0;
        for (size_t b = 0; b < batch.size(); ++b) {
            Vec y = net.forward(p, batch[b]);
            for (int i = 0; i < outDim; ++i) {
                double d = y[i] - targets[b][i];
                acc += d * d;
            }
        }
        return acc / static_cast<double>(batch.size());
    };

    Vec analytic(net.param_count(), 0.0);
    for (size_t b = 0; b < batch.size(); ++b) {
        std::vector<Vec> trace;
        Vec y = net.forward(params, batch[b], &trace);
        Vec dout(outDim);
        for (int i = 0; i < outDim; ++i)
            dout[i] = 2.0 * (y[i] - targets[b][i]) / static_cast<double>(batch.size());
        net.backward(params, trace, std::move(dout), &analytic);
    }

    // seeded sample without replacement
    std::vector<int> idx(params.size());
    std::iota(idx.begin(), idx.end(), 0);
    int n = std::min<int>(sampleCoords, static_cast<int>(params.size()));
    for (int i = 0; i < n; ++i) {
        int j = i + static_cast<int>(g.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }

    GradCheckReport rep;
    Vec p = params;
    for (int k = 0; k < n; ++k) {
        int i = idx[k];
        double orig = p[i];
        double rel = 0.0;
        double step = h;
        // Adaptive stencil: a ReLU kink inside [p-h, p+h] makes the central
        // difference disagree with the (correct) one-sided gradient by O(1),
        // but shrinking the step moves the stencil off the kink and the error
        // vanishes. A genuinely wrong analytic gradient disagrees regardless
        // of the step, so retrying cannot mask real defects.
        for (int attempt = 0; attempt < 3; ++attempt) {
            p[i] = orig + step;
            double lp = loss(p);
            p[i] = orig - step;
            double lm = loss(p);
            p[i] = orig;
            double fd = (lp - lm) / (2.0 * step);
            double denom = std::max(std::abs(fd) + std::abs(analytic[i]), 1e-8);
            rel = std::abs(fd - analytic[i]) / denom;
            if (rel < tol) break;
            step /= 8.0;
        }
        rep.maxRelError = std::max(rep.maxRelError, rel);
    }
    rep.coordsChecked = n;
    rep.pass = rep.maxRelError < tol;
    return rep;
}

// Raster -> flat [y][x][c] tensor (layouts already agree).
inline Vec raster_tensor(const Raster& img) { return img.data; }

// The caller-side preparation contract for the encoder: align to 32 px,
// then standardize.
inline Vec prepare_encoder_input(const Raster& img) {
    return standardize(align_to(img, kEncoderInputEdge));
}

} // namespace veriforest::nn
