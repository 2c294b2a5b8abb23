#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include "mdpo/mlp.hpp"

namespace mdpo {

/// Objective returning (value, analytic gradient).
using DifferentiableFn = std::function<std::pair<double, ParamVector>(const ParamVector&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    Eigen::Index worst_index = -1;
    ParamVector analytic;
    ParamVector numeric;
};

/// Central differences with step h per coordinate. Relative error per entry
/// is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline GradCheckResult grad_check_detailed(const DifferentiableFn& f, const ParamVector& x,
                                           double h = 1e-5) {
    GradCheckResult out;
    out.analytic = f(x).second;
    out.numeric = ParamVector::Zero(x.size());
    ParamVector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe).first;
        probe[i] = x[i] - h;
        const double down = f(probe).first;
        probe[i] = x[i];
        out.numeric[i] = (up - down) / (2.0 * h);
        const double denom =
            std::max(1e-8, std::abs(out.analytic[i]) + std::abs(out.numeric[i]));
        const double err = std::abs(out.analytic[i] - out.numeric[i]) / denom;
        if (err > out.max_rel_error || out.worst_index < 0) {
            out.max_rel_error = std::max(err, out.max_rel_error);
            out.worst_index = i;
        }
    }
    return out;
}

inline double grad_check(const DifferentiableFn& f, const ParamVector& x, double h = 1e-5) {
    return grad_check_detailed(f, x, h).max_rel_error;
}

}  // namespace mdpo
