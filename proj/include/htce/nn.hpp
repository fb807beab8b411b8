#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "htce/matrix.hpp"
#include "htce/rng.hpp"

namespace htce::nn {

enum class Activation { linear, relu, selu, sigmoid };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::selu: return "selu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

inline constexpr double kSeluLambda = 1.0507009873554804934;
inline constexpr double kSeluAlpha = 1.6732632423543772848;

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::linear: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::selu:
            return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
        case Activation::sigmoid: return sigmoid(x);
    }
    return x;
}

/// Derivative as a function of the pre-activation value.
inline double activate_grad(Activation a, double pre) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::selu:
            return pre > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(pre);
        case Activation::sigmoid: {
            const double s = sigmoid(pre);
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

/// One learnable tensor plus its gradient accumulator.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.fill(0.0); }
};

/// Fully connected layer with elementwise activation. forward() caches its
/// input and pre-activation so the next backward() can produce exact
/// analytic gradients; gradients accumulate into the Param buffers.
class DenseLayer {
public:
    DenseLayer() = default;

    DenseLayer(std::string name, std::size_t in_dim, std::size_t out_dim, Activation act)
        : act_(act),
          W_(name + ".W", in_dim, out_dim),
          b_(name + ".b", 1, out_dim) {}

    /// Fan-in scaled uniform init: He-style for relu/selu, Glorot-style for
    /// linear/sigmoid. Biases start at zero.
    void init(Rng& rng) {
        const double fan_in = static_cast<double>(W_.value.rows());
        const double fan_out = static_cast<double>(W_.value.cols());
        double limit;
        if (act_ == Activation::relu || act_ == Activation::selu)
            limit = std::sqrt(6.0 / fan_in);
        else
            limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : W_.value.raw()) v = rng.uniform(-limit, limit);
        b_.value.fill(0.0);
    }

    std::size_t in_dim() const { return W_.value.rows(); }
    std::size_t out_dim() const { return W_.value.cols(); }
    Activation activation() const { return act_; }

    Matrix forward(const Matrix& input) {
        if (input.cols() != in_dim())
            throw ShapeError("dense forward: input width " + std::to_string(input.cols()) +
                             " != " + std::to_string(in_dim()) + " (" + W_.name + ")");
        in_cache_ = input;
        pre_cache_ = matmul(input, W_.value);
        for (std::size_t i = 0; i < pre_cache_.rows(); ++i)
            for (std::size_t j = 0; j < pre_cache_.cols(); ++j) pre_cache_(i, j) += b_.value(0, j);
        has_cache_ = true;
        Matrix out = pre_cache_;
        if (act_ != Activation::linear)
            for (double& v : out.raw()) v = activate(act_, v);
        out.require_finite(W_.name.c_str());
        return out;
    }

    /// upstream is dLoss/dOutput; returns dLoss/dInput and accumulates the
    /// weight and bias gradients.
    Matrix backward(const Matrix& upstream) {
        if (!has_cache_) throw ShapeError("dense backward without a cached forward (" + W_.name + ")");
        if (!upstream.same_shape(pre_cache_)) throw ShapeError("dense backward: upstream shape mismatch");
        Matrix dpre = upstream;
        if (act_ != Activation::linear) {
            for (std::size_t k = 0; k < dpre.size(); ++k)
                dpre.raw()[k] *= activate_grad(act_, pre_cache_.raw()[k]);
        }
        add_scaled(W_.grad, matmul_tn(in_cache_, dpre));
        for (std::size_t i = 0; i < dpre.rows(); ++i)
            for (std::size_t j = 0; j < dpre.cols(); ++j) b_.grad(0, j) += dpre(i, j);
        return matmul_nt(dpre, W_.value);
    }

    Param& weights() { return W_; }
    Param& bias() { return b_; }
    const Param& weights() const { return W_; }
    const Param& bias() const { return b_; }

    void collect_params(std::vector<Param*>& out) {
        out.push_back(&W_);
        out.push_back(&b_);
    }

private:
    Activation act_ = Activation::linear;
    Param W_, b_;
    Matrix in_cache_, pre_cache_;
    bool has_cache_ = false;
};

/// Plain feedforward net: hidden layers share one activation, the last layer
/// has its own. Used for the single-domain baseline learners and the
/// TARNet-style representation towers.
class Mlp {
public:
    Mlp() = default;

    Mlp(const std::string& name, std::size_t in_dim, const std::vector<std::size_t>& widths,
        Activation hidden, Activation out) {
        std::size_t prev = in_dim;
        for (std::size_t l = 0; l < widths.size(); ++l) {
            const Activation a = (l + 1 == widths.size()) ? out : hidden;
            layers_.emplace_back(name + ".layer" + std::to_string(l), prev, widths[l], a);
            prev = widths[l];
        }
    }

    void init(Rng& rng) {
        for (auto& l : layers_) l.init(rng);
    }

    Matrix forward(const Matrix& x) {
        Matrix h = x;
        for (auto& l : layers_) h = l.forward(h);
        return h;
    }

    Matrix backward(const Matrix& dout) {
        Matrix d = dout;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = it->backward(d);
        return d;
    }

    std::size_t in_dim() const { return layers_.front().in_dim(); }
    std::size_t out_dim() const { return layers_.back().out_dim(); }

    void collect_params(std::vector<Param*>& out) {
        for (auto& l : layers_) l.collect_params(out);
    }

private:
    std::vector<DenseLayer> layers_;
};

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are lazily shaped to the
/// parameter list on the first step; the step counter is shared.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Param*>& params) {
        if (m_.empty()) {
            for (const Param* p : params) {
                m_.emplace_back(p->value.rows(), p->value.cols());
                v_.emplace_back(p->value.rows(), p->value.cols());
            }
        }
        if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed size");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Param& p = *params[k];
            if (!p.value.same_shape(m_[k])) throw ShapeError("adam: shape mismatch for " + p.name);
            if (!p.grad.all_finite()) throw NumericError("adam: non-finite gradient for " + p.name);
            double* val = p.value.data();
            const double* g = p.grad.data();
            double* m = m_[k].data();
            double* v = v_[k].data();
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                val[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

/// Mean squared error; writes dLoss/dPred into *dpred when given.
inline double loss_mse(const Matrix& pred, const Matrix& target, Matrix* dpred = nullptr) {
    if (!pred.same_shape(target)) throw ShapeError("mse: shape mismatch");
    if (pred.size() == 0) throw ShapeError("mse: empty input");
    const double n = static_cast<double>(pred.size());
    double acc = 0.0;
    if (dpred) *dpred = Matrix(pred.rows(), pred.cols());
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double diff = pred.raw()[k] - target.raw()[k];
        acc += diff * diff;
        if (dpred) dpred->raw()[k] = 2.0 * diff / n;
    }
    if (!std::isfinite(acc)) throw NumericError("mse: non-finite loss");
    return acc / n;
}

/// Binary cross-entropy on probabilities in (0,1) against {0,1} targets.
inline double loss_bce(const Matrix& pred, const Matrix& target, Matrix* dpred = nullptr) {
    if (!pred.same_shape(target)) throw ShapeError("bce: shape mismatch");
    if (pred.size() == 0) throw ShapeError("bce: empty input");
    const double n = static_cast<double>(pred.size());
    double acc = 0.0;
    if (dpred) *dpred = Matrix(pred.rows(), pred.cols());
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double p = pred.raw()[k];
        const double t = target.raw()[k];
        if (!(p > 0.0 && p < 1.0)) throw NumericError("bce: prediction outside (0,1)");
        if (t != 0.0 && t != 1.0) throw NumericError("bce: target not in {0,1}");
        acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
        if (dpred) dpred->raw()[k] = (p - t) / (p * (1.0 - p)) / n;
    }
    if (!std::isfinite(acc)) throw NumericError("bce: non-finite loss");
    return acc / n;
}

/// BCE composed with a sigmoid output, evaluated from the logits. Same
/// function as loss_bce(sigmoid(z), t) but stable for saturated logits;
/// gradient is taken with respect to the logits.
inline double loss_bce_logits(const Matrix& logits, const Matrix& target, Matrix* dlogits = nullptr) {
    if (!logits.same_shape(target)) throw ShapeError("bce_logits: shape mismatch");
    if (logits.size() == 0) throw ShapeError("bce_logits: empty input");
    const double n = static_cast<double>(logits.size());
    double acc = 0.0;
    if (dlogits) *dlogits = Matrix(logits.rows(), logits.cols());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double z = logits.raw()[k];
        const double t = target.raw()[k];
        // ln(1 + e^z) - t*z, computed without overflow
        const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        acc += softplus - t * z;
        if (dlogits) dlogits->raw()[k] = (sigmoid(z) - t) / n;
    }
    if (!std::isfinite(acc)) throw NumericError("bce_logits: non-finite loss");
    return acc / n;
}

/// ||a^T b||_F^2 for matrices with matching row counts.
inline double frobenius_orth(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("frobenius_orth: row counts differ");
    return frobenius_sq(matmul_tn(a, b));
}

/// Gradients of frobenius_orth: d/da = 2 b (b^T a), d/db = 2 a (a^T b).
/// Accumulated into da/db scaled by `scale`.
inline double frobenius_orth_grad(const Matrix& a, const Matrix& b, Matrix& da, Matrix& db,
                                  double scale = 1.0) {
    if (a.rows() != b.rows()) throw ShapeError("frobenius_orth_grad: row counts differ");
    const Matrix g = matmul_tn(a, b);  // a^T b
    add_scaled(da, matmul_nt(b, g), 2.0 * scale);
    add_scaled(db, matmul(a, g), 2.0 * scale);
    return frobenius_sq(g);
}

}  // namespace htce::nn
