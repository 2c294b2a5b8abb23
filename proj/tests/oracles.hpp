#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls the routine it is checking.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline double kl_sum(const Vec& p, const Vec& r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / r[i]);
    return s;
}

/// (q/(1-q)) sum p pk^{q-1} - (1/(1-q)) sum p^q + sum pk^q, one term at a time.
inline double tsallis_termwise(const Vec& p, const Vec& pk, double q) {
    double a = 0.0, b = 0.0, c = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        a += p[i] * std::pow(pk[i], q - 1.0);
        b += std::pow(p[i], q);
        c += std::pow(pk[i], q);
    }
    return q / (1.0 - q) * a - b / (1.0 - q) + c;
}

inline double logq_pow(double x, double q) { return (std::pow(x, q - 1.0) - 1.0) / (q - 1.0); }

/// Rewritten form: sum p (log_q p - q log_q pk) - (1 - q) sum pk log_q pk.
inline double tsallis_logq_form(const Vec& p, const Vec& pk, double q) {
    double s = 0.0, tail = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * (logq_pow(p[i], q) - q * logq_pow(pk[i], q));
        tail += pk[i] * logq_pow(pk[i], q);
    }
    return s - (1.0 - q) * tail;
}

/// Brute-force argmin over the 2-simplex at resolution h.
inline Vec argmin_simplex2(const std::function<double(const Vec&)>& f, double h) {
    const long n = std::lround(1.0 / h);
    double best = std::numeric_limits<double>::infinity();
    Vec arg(2);
    for (long i = 0; i <= n; ++i) {
        Vec y(2);
        y << double(i) / double(n), 1.0 - double(i) / double(n);
        const double v = f(y);
        if (v < best) {
            best = v;
            arg = y;
        }
    }
    return arg;
}

inline Vec argmin_simplex3(const std::function<double(const Vec&)>& f, double h) {
    const long n = std::lround(1.0 / h);
    double best = std::numeric_limits<double>::infinity();
    Vec arg(3);
    for (long i = 0; i <= n; ++i)
        for (long j = 0; i + j <= n; ++j) {
            Vec y(3);
            y << double(i) / double(n), double(j) / double(n), double(n - i - j) / double(n);
            const double v = f(y);
            if (v < best) {
                best = v;
                arg = y;
            }
        }
    return arg;
}

/// Finite MDP in plain nested containers so the oracles share no code with
/// the library's matrix layout.
struct Mdp {
    int S = 0, A = 0;
    std::vector<std::vector<std::vector<double>>> P;  // P[s][a][s']
    std::vector<std::vector<double>> R;               // R[s][a]
    double gamma = 0.9;
    std::vector<double> mu;
};

inline double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

/// Iterative policy evaluation (Bellman sweeps until the change is below tol).
inline std::vector<double> evaluate_sweeps(const Mdp& m, const std::vector<std::vector<double>>& pi,
                                           double lambda = 0.0, double tol = 1e-13) {
    std::vector<double> V(m.S, 0.0), next(m.S);
    for (int it = 0; it < 100000; ++it) {
        double delta = 0.0;
        for (int s = 0; s < m.S; ++s) {
            double v = lambda * entropy(pi[s]);
            for (int a = 0; a < m.A; ++a) {
                double q = m.R[s][a];
                for (int t = 0; t < m.S; ++t) q += m.gamma * m.P[s][a][t] * V[t];
                v += pi[s][a] * q;
            }
            next[s] = v;
            delta = std::max(delta, std::abs(v - V[s]));
        }
        V = next;
        if (delta < tol) break;
    }
    return V;
}

inline std::vector<std::vector<double>> q_from_v(const Mdp& m, const std::vector<double>& V) {
    std::vector<std::vector<double>> Q(m.S, std::vector<double>(m.A));
    for (int s = 0; s < m.S; ++s)
        for (int a = 0; a < m.A; ++a) {
            double q = m.R[s][a];
            for (int t = 0; t < m.S; ++t) q += m.gamma * m.P[s][a][t] * V[t];
            Q[s][a] = q;
        }
    return Q;
}

/// Discounted state visitation by the truncated power series
/// (1 - gamma) sum_t gamma^t mu^T P_pi^t.
inline std::vector<double> visitation_series(const Mdp& m, const std::vector<std::vector<double>>& pi,
                                             int terms = 5000) {
    std::vector<double> d(m.S, 0.0), cur = m.mu, nxt(m.S);
    double w = 1.0 - m.gamma;
    for (int t = 0; t < terms; ++t) {
        for (int s = 0; s < m.S; ++s) d[s] += w * cur[s];
        std::fill(nxt.begin(), nxt.end(), 0.0);
        for (int s = 0; s < m.S; ++s)
            for (int a = 0; a < m.A; ++a)
                for (int u = 0; u < m.S; ++u) nxt[u] += cur[s] * pi[s][a] * m.P[s][a][u];
        cur = nxt;
        w *= m.gamma;
    }
    return d;
}

/// Monte Carlo visitation: geometric stopping time, then the state reached.
inline std::vector<double> visitation_mc(const Mdp& m, const std::vector<std::vector<double>>& pi,
                                         int samples, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](const std::vector<double>& p) {
        double x = u(rng), c = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            c += p[i];
            if (x < c) return static_cast<int>(i);
        }
        return static_cast<int>(p.size() - 1);
    };
    std::vector<double> d(m.S, 0.0);
    for (int n = 0; n < samples; ++n) {
        int s = draw(m.mu);
        while (u(rng) < m.gamma) s = draw(m.P[s][draw(pi[s])]);
        d[s] += 1.0 / samples;
    }
    return d;
}

/// Best deterministic policy value by enumerating all A^S policies.
inline std::vector<double> optimal_by_enumeration(const Mdp& m) {
    std::vector<double> best(m.S, -std::numeric_limits<double>::infinity());
    long total = 1;
    for (int s = 0; s < m.S; ++s) total *= m.A;
    for (long code = 0; code < total; ++code) {
        std::vector<std::vector<double>> pi(m.S, std::vector<double>(m.A, 0.0));
        long c = code;
        for (int s = 0; s < m.S; ++s) {
            pi[s][c % m.A] = 1.0;
            c /= m.A;
        }
        const auto V = evaluate_sweeps(m, pi);
        for (int s = 0; s < m.S; ++s) best[s] = std::max(best[s], V[s]);
    }
    return best;
}

/// Soft-optimal values by fixed-point iteration of V = lambda log sum exp(Q / lambda).
inline std::vector<double> soft_optimal_sweeps(const Mdp& m, double lambda, double tol = 1e-13) {
    std::vector<double> V(m.S, 0.0);
    for (int it = 0; it < 100000; ++it) {
        const auto Q = q_from_v(m, V);
        double delta = 0.0;
        for (int s = 0; s < m.S; ++s) {
            double mx = Q[s][0];
            for (int a = 1; a < m.A; ++a) mx = std::max(mx, Q[s][a]);
            double z = 0.0;
            for (int a = 0; a < m.A; ++a) z += std::exp((Q[s][a] - mx) / lambda);
            const double v = mx + lambda * std::log(z);
            delta = std::max(delta, std::abs(v - V[s]));
            V[s] = v;
        }
        if (delta < tol) break;
    }
    return V;
}

/// Central finite-difference gradient.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    Vec probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_error(const Vec& a, const Vec& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1e-8, std::abs(a[i]) + std::abs(b[i])));
    return worst;
}

/// Gaussian log density written out per coordinate.
inline double gaussian_log_density(const Vec& a, const Vec& mean, const Vec& log_std) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double sd = std::exp(log_std[i]);
        const double z = (a[i] - mean[i]) / sd;
        lp += -0.5 * z * z - log_std[i] - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
}

/// KL between diagonal Gaussians by 1-d numerical quadrature per coordinate.
inline double gaussian_kl_quadrature(const Vec& m1, const Vec& ls1, const Vec& m2, const Vec& ls2) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < m1.size(); ++i) {
        const double s1 = std::exp(ls1[i]), s2 = std::exp(ls2[i]);
        const double lo = m1[i] - 12.0 * s1, hi = m1[i] + 12.0 * s1;
        const int n = 20000;
        const double dx = (hi - lo) / n;
        double acc = 0.0;
        for (int k = 0; k <= n; ++k) {
            const double x = lo + dx * k;
            const double z1 = (x - m1[i]) / s1, z2 = (x - m2[i]) / s2;
            const double l1 = -0.5 * z1 * z1 - std::log(s1) - 0.5 * std::log(2.0 * M_PI);
            const double l2 = -0.5 * z2 * z2 - std::log(s2) - 0.5 * std::log(2.0 * M_PI);
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            acc += w * std::exp(l1) * (l1 - l2);
        }
        total += acc * dx;
    }
    return total;
}

}  // namespace oracle
