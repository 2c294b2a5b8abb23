#pragma once

#include <vector>

#include "mdpo/mdp.hpp"
#include "mdpo/rng.hpp"
#include "oracles.hpp"

namespace testing_support {

inline oracle::Mdp to_oracle(const mdpo::TabularMdp& m) {
    oracle::Mdp o;
    o.S = static_cast<int>(m.n_states());
    o.A = static_cast<int>(m.n_actions());
    o.gamma = m.gamma();
    o.P.assign(o.S, std::vector<std::vector<double>>(o.A, std::vector<double>(o.S)));
    o.R.assign(o.S, std::vector<double>(o.A));
    o.mu.assign(o.S, 0.0);
    for (int s = 0; s < o.S; ++s) {
        o.mu[s] = m.initial()[s];
        for (int a = 0; a < o.A; ++a) {
            o.R[s][a] = m.rewards()(s, a);
            for (int t = 0; t < o.S; ++t) o.P[s][a][t] = m.next_states(s, a)[t];
        }
    }
    return o;
}

inline std::vector<std::vector<double>> to_rows(const mdpo::TabularPolicy& pi) {
    std::vector<std::vector<double>> rows(pi.n_states(), std::vector<double>(pi.n_actions()));
    for (Eigen::Index s = 0; s < pi.n_states(); ++s)
        for (Eigen::Index a = 0; a < pi.n_actions(); ++a) rows[s][a] = pi(s, a);
    return rows;
}

inline mdpo::TabularPolicy random_policy(Eigen::Index S, Eigen::Index A, mdpo::Rng& rng,
                                         double floor = 0.01) {
    mdpo::Matrix m(S, A);
    for (Eigen::Index s = 0; s < S; ++s) {
        for (Eigen::Index a = 0; a < A; ++a) m(s, a) = floor + mdpo::uniform(rng, 0.0, 1.0);
        m.row(s) /= m.row(s).sum();
    }
    return mdpo::TabularPolicy(m);
}

inline mdpo::Vector from_std(const std::vector<double>& v) {
    return Eigen::Map<const mdpo::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace testing_support
