#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mdpo/bregman.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

/// Flat parameter vector shared by every differentiable model.
using ParamVector = Eigen::VectorXd;

/// Fully connected network with tanh hidden layers and a linear output
/// layer. All weights and biases live in one flat vector; layer l occupies a
/// column-major (out x in) weight block followed by its bias.
///
/// Samples are columns: forward() maps an (in x N) batch to (out x N).
class Mlp {
public:
    struct Tape {
        std::vector<Matrix> activations;  // layer inputs; back() is the output
    };

    Mlp() = default;

    Mlp(Eigen::Index in, std::vector<Eigen::Index> hidden, Eigen::Index out) {
        sizes_.push_back(in);
        for (auto h : hidden)
            if (h > 0) sizes_.push_back(h);
        sizes_.push_back(out);
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
            total += static_cast<std::size_t>(sizes_[l + 1] * (sizes_[l] + 1));
        params_ = ParamVector::Zero(static_cast<Eigen::Index>(total));
    }

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases; the output
    /// layer is additionally scaled by `output_scale`.
    void init(Rng& rng, double output_scale = 1.0) {
        Eigen::Index offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const auto in = sizes_[l], out = sizes_[l + 1];
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            const double scale = (l + 2 == sizes_.size()) ? output_scale : 1.0;
            for (Eigen::Index i = 0; i < in * out; ++i)
                params_[offset + i] = scale * uniform(rng, -bound, bound);
            offset += in * out;
            params_.segment(offset, out).setZero();
            offset += out;
        }
    }

    Eigen::Index input_dim() const { return sizes_.front(); }
    Eigen::Index output_dim() const { return sizes_.back(); }
    Eigen::Index num_params() const { return params_.size(); }
    std::size_t num_layers() const { return sizes_.size() - 1; }
    const std::vector<Eigen::Index>& sizes() const { return sizes_; }

    const ParamVector& params() const { return params_; }
    ParamVector& params() { return params_; }
    void set_params(const ParamVector& p) {
        if (p.size() != params_.size()) throw ShapeMismatch("Mlp parameter size mismatch");
        params_ = p;
    }

    Matrix forward(const Matrix& X) const {
        Tape tape;
        return forward(X, tape);
    }

    Matrix forward(const Matrix& X, Tape& tape) const {
        if (X.rows() != input_dim())
            throw ShapeMismatch("Mlp input has " + std::to_string(X.rows()) + " rows, expected " +
                                std::to_string(input_dim()));
        tape.activations.clear();
        tape.activations.reserve(sizes_.size());
        tape.activations.push_back(X);
        Eigen::Index offset = 0;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const auto in = sizes_[l], out = sizes_[l + 1];
            Eigen::Map<const Matrix> W(params_.data() + offset, out, in);
            Eigen::Map<const Vector> b(params_.data() + offset + in * out, out);
            offset += out * (in + 1);
            Matrix Z = W * tape.activations.back();
            Z.colwise() += b;
            if (l + 1 < num_layers()) Z = Z.array().tanh().matrix();
            tape.activations.push_back(std::move(Z));
        }
        return tape.activations.back();
    }

    /// Backpropagates dL/dY. Adds dL/dparams into `grad` (if non-null) and
    /// writes dL/dX into `dX` (if non-null).
    void backward(const Tape& tape, const Matrix& dY, ParamVector* grad, Matrix* dX) const {
        if (grad && grad->size() != num_params()) throw ShapeMismatch("gradient buffer size");
        Matrix delta = dY;
        Eigen::Index offset = num_params();
        for (std::size_t l = num_layers(); l-- > 0;) {
            const auto in = sizes_[l], out = sizes_[l + 1];
            offset -= out * (in + 1);
            if (l + 1 < num_layers()) {
                // tanh'(z) = 1 - tanh(z)^2, with tanh(z) stored on the tape
                const auto& h = tape.activations[l + 1];
                delta = (delta.array() * (1.0 - h.array().square())).matrix();
            }
            const Matrix& input = tape.activations[l];
            if (grad) {
                Eigen::Map<Matrix> dW(grad->data() + offset, out, in);
                Eigen::Map<Vector> db(grad->data() + offset + in * out, out);
                dW.noalias() += delta * input.transpose();
                db += delta.rowwise().sum();
            }
            if (l > 0 || dX) {
                Eigen::Map<const Matrix> W(params_.data() + offset, out, in);
                Matrix next = W.transpose() * delta;
                delta = std::move(next);
            }
        }
        if (dX) *dX = std::move(delta);
    }

private:
    std::vector<Eigen::Index> sizes_;
    ParamVector params_;
};

/// Scalar-output perceptron used for V(s) and Q(s, a) critics.
class ValueNet {
public:
    ValueNet() = default;
    ValueNet(Eigen::Index input_dim, std::vector<Eigen::Index> hidden)
        : net_(input_dim, std::move(hidden), 1) {}

    static ValueNet make(Eigen::Index input_dim, std::vector<Eigen::Index> hidden, Rng& rng) {
        ValueNet v(input_dim, std::move(hidden));
        v.net_.init(rng);
        return v;
    }

    Eigen::Index input_dim() const { return net_.input_dim(); }
    Eigen::Index num_params() const { return net_.num_params(); }
    const ParamVector& params() const { return net_.params(); }
    ParamVector& params() { return net_.params(); }
    void set_params(const ParamVector& p) { net_.set_params(p); }
    const Mlp& mlp() const { return net_; }

    /// Predictions for each column of X.
    Vector predict(const Matrix& X) const { return net_.forward(X).row(0).transpose(); }

    double predict_one(const Vector& x) const { return predict(x)[0]; }

    struct Fit {
        Vector prediction;
        double loss = 0.0;  // mean squared error
        ParamVector grad;
    };

    /// Mean squared error against `targets` and its exact gradient.
    Fit forward_backward(const Matrix& X, const Vector& targets) const {
        if (X.cols() != targets.size()) throw ShapeMismatch("targets do not match batch size");
        if (!X.allFinite() || !targets.allFinite())
            throw NonFiniteInput("value net inputs must be finite");
        Mlp::Tape tape;
        Fit fit;
        fit.prediction = net_.forward(X, tape).row(0).transpose();
        const Vector err = fit.prediction - targets;
        const double n = static_cast<double>(targets.size());
        fit.loss = err.squaredNorm() / n;
        fit.grad = ParamVector::Zero(num_params());
        net_.backward(tape, (2.0 / n) * err.transpose(), &fit.grad, nullptr);
        return fit;
    }

    /// dV/dX for each column (used for dQ/da through the action inputs).
    Matrix input_gradient(const Matrix& X) const {
        Mlp::Tape tape;
        net_.forward(X, tape);
        Matrix dX;
        net_.backward(tape, Matrix::Ones(1, X.cols()), nullptr, &dX);
        return dX;
    }

    /// Backprop of an arbitrary per-sample upstream weight: returns
    /// (values, sum_n w_n dV_n/dparams, dV_n/dX_n * w_n).
    void weighted_backward(const Matrix& X, const Vector& weights, Vector* values,
                           ParamVector* grad, Matrix* dX) const {
        Mlp::Tape tape;
        const Matrix out = net_.forward(X, tape);
        if (values) *values = out.row(0).transpose();
        net_.backward(tape, weights.transpose(), grad, dX);
    }

    void sgd_step(const ParamVector& grad, double eta) { net_.params() -= eta * grad; }

    /// target <- (1 - tau) target + tau live
    void polyak_from(const ValueNet& live, double tau) {
        net_.params() = (1.0 - tau) * net_.params() + tau * live.params();
    }

private:
    Mlp net_;
};

inline std::vector<Eigen::Index> hidden_layers(Eigen::Index width, std::size_t depth) {
    if (width <= 0) return {};
    return std::vector<Eigen::Index>(depth, width);
}

}  // namespace mdpo
