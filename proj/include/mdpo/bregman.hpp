#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "mdpo/errors.hpp"

namespace mdpo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Smallest probability used inside log/exp evaluations. Stored
/// distributions are never clamped.
inline constexpr double kProbFloor = 1e-12;

/// Branch threshold for the q -> 1 (Shannon) limit of the Tsallis family.
inline constexpr double kShannonSwitch = 1e-9;

inline constexpr double kSimplexTol = 1e-9;

namespace detail {

inline void check_same_dim(Eigen::Index a, Eigen::Index b, const char* where) {
    if (a != b)
        throw DimensionMismatch(std::string(where) + ": " + std::to_string(a) +
                                " vs " + std::to_string(b));
}

inline bool is_distribution(const Vector& p, double tol = kSimplexTol) {
    if (p.size() == 0) return false;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (!(p[i] >= 0.0) || !std::isfinite(p[i])) return false;
    return std::abs(p.sum() - 1.0) <= tol;
}

/// x_i * exp(-t * g_i) / Z, with the exponent shifted by min(g) so the
/// largest factor is exactly 1.
inline Vector exponentiated_update(const Vector& x, const Vector& grad, double t) {
    check_same_dim(x.size(), grad.size(), "exponentiated_update");
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!(x[i] > 0.0)) throw ZeroSupport("entry " + std::to_string(i) + " is zero");
    const double g_min = grad.minCoeff();
    Vector w(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        w[i] = x[i] * std::exp(-t * (grad[i] - g_min));
    return w / w.sum();
}

}  // namespace detail

/// A point of the probability simplex (dimension >= 2).
class SimplexPoint {
public:
    explicit SimplexPoint(Vector probs) : probs_(std::move(probs)) {
        if (probs_.size() < 2)
            throw InvalidDistribution("simplex point needs dimension >= 2");
        if (!detail::is_distribution(probs_))
            throw InvalidDistribution("entries must be >= 0 and sum to 1");
    }

    static SimplexPoint uniform(Eigen::Index dim) {
        return SimplexPoint(Vector::Constant(dim, 1.0 / static_cast<double>(dim)));
    }

    const Vector& probs() const noexcept { return probs_; }
    Eigen::Index dim() const noexcept { return probs_.size(); }
    double operator[](Eigen::Index i) const { return probs_[i]; }

private:
    Vector probs_;
};

struct TsallisParams {
    double q = 1.0;

    explicit TsallisParams(double q_value) : q(q_value) {
        if (!(q > 0.0 && q <= 2.0))
            throw BadValue("Tsallis q must lie in (0, 2], got " + std::to_string(q));
    }

    bool is_shannon() const noexcept { return std::abs(q - 1.0) < kShannonSwitch; }
};

/// Step sizes t_k for mirror descent.
struct StepSchedule {
    enum class Kind { annealed, constant, inverse_sqrt };

    Kind kind = Kind::inverse_sqrt;
    double value = 1.0;      // constant step, or t0 for inverse-sqrt
    std::size_t total = 1;   // K, used by the annealed kind

    static StepSchedule annealed(std::size_t K) { return {Kind::annealed, 1.0, K}; }
    static StepSchedule constant(double t) { return {Kind::constant, t, 1}; }
    static StepSchedule inverse_sqrt(double t0 = 1.0) { return {Kind::inverse_sqrt, t0, 1}; }

    double operator()(std::size_t k) const {
        switch (kind) {
        case Kind::annealed:
            return 1.0 - static_cast<double>(k) / static_cast<double>(total);
        case Kind::constant:
            return value;
        case Kind::inverse_sqrt:
            return value / std::sqrt(static_cast<double>(k) + 1.0);
        }
        return value;
    }
};

inline const char* to_string(StepSchedule::Kind kind) {
    switch (kind) {
    case StepSchedule::Kind::annealed: return "annealed";
    case StepSchedule::Kind::constant: return "constant";
    case StepSchedule::Kind::inverse_sqrt: return "inverse-sqrt";
    }
    return "?";
}

/// KL(p || r) = sum_i p_i ln(p_i / r_i), with 0 ln(0/.) = 0.
inline double kl_divergence(const Vector& p, const Vector& r) {
    detail::check_same_dim(p.size(), r.size(), "kl_divergence");
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (!(r[i] > 0.0))
            throw SupportViolation("p_" + std::to_string(i) + " > 0 but r_" +
                                   std::to_string(i) + " = 0");
        total += p[i] * (std::log(p[i]) - std::log(std::max(r[i], kProbFloor)));
    }
    return std::max(total, 0.0);
}

inline double kl_divergence(const SimplexPoint& p, const SimplexPoint& r) {
    return kl_divergence(p.probs(), r.probs());
}

/// Tsallis q-logarithm; the natural log when |q - 1| < 1e-9.
inline double log_q(double x, double q) {
    if (!(x > 0.0)) throw NonPositiveInput("log_q needs x > 0, got " + std::to_string(x));
    if (std::abs(q - 1.0) < kShannonSwitch) return std::log(x);
    return std::expm1((q - 1.0) * std::log(x)) / (q - 1.0);
}

/// Tsallis Bregman divergence of the negative Tsallis entropy,
///   q/(1-q) sum p pk^{q-1} - 1/(1-q) sum p^q + sum pk^q.
/// Falls back to KL at q = 1.
inline double tsallis_bregman(const Vector& p, const Vector& pk, const TsallisParams& tp) {
    detail::check_same_dim(p.size(), pk.size(), "tsallis_bregman");
    for (Eigen::Index i = 0; i < pk.size(); ++i)
        if (!(pk[i] > 0.0))
            throw SupportViolation("pk_" + std::to_string(i) + " must be > 0");
    if (tp.is_shannon()) return kl_divergence(p, pk);

    const double q = tp.q;
    double cross = 0.0, self = 0.0, ref = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pki = std::max(pk[i], kProbFloor);
        cross += p[i] * std::pow(pki, q - 1.0);
        self += std::pow(p[i], q);
        ref += std::pow(pki, q);
    }
    const double value = (q * cross - self) / (1.0 - q) + ref;
    return std::max(value, 0.0);
}

inline double tsallis_bregman(const SimplexPoint& p, const SimplexPoint& pk,
                              const TsallisParams& tp) {
    return tsallis_bregman(p.probs(), pk.probs(), tp);
}

inline double euclidean_bregman(const Vector& x, const Vector& y) {
    detail::check_same_dim(x.size(), y.size(), "euclidean_bregman");
    return 0.5 * (x - y).squaredNorm();
}

/// One exponentiated-gradient step on the simplex (mirror descent with the
/// KL Bregman term).
inline SimplexPoint md_simplex_step(const SimplexPoint& xk, const Vector& grad, double tk) {
    detail::check_same_dim(xk.dim(), grad.size(), "md_simplex_step");
    if (!(tk >= 0.0)) throw BadValue("step size must be positive");
    return SimplexPoint(detail::exponentiated_update(xk.probs(), grad, tk));
}

using GradientFn = std::function<Vector(const Vector&)>;

/// Runs K mirror-descent steps from x0 using schedule(k) as t_k.
inline SimplexPoint md_solve_simplex(const GradientFn& grad_fn, const SimplexPoint& x0,
                                     const StepSchedule& schedule, std::size_t K) {
    if (K < 1) throw BadValue("md_solve_simplex needs K >= 1");
    SimplexPoint x = x0;
    for (std::size_t k = 0; k < K; ++k) x = md_simplex_step(x, grad_fn(x.probs()), schedule(k));
    return x;
}

}  // namespace mdpo
