#pragma once

// Small randomised chains shared by the unit and acceptance tests.

#include "smot/dual_core.hpp"
#include "smot/sinkhorn_solver.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace smot::fixtures {

/// Reference chain on [0, 1] around x0 = 0 (unit spot) with a few grid points per step.
inline ReferenceMeasure small_reference(int n_steps, double delta = 2.5, double k_pts = 1.5, double vol = 0.2,
                                        double v0 = 0.0, std::vector<double> maturities = {}) {
    ReferenceSpec spec;
    spec.horizon = 1.0;
    spec.n_steps = n_steps;
    spec.maturities = std::move(maturities);
    spec.ref_vol = constant_function(vol);
    spec.x0 = 0.0;
    spec.v0 = v0;
    spec.delta = delta;
    spec.k_pts = k_pts;
    return build_reference_measure(spec);
}

/// One call and one put at every timestep after the first, strikes around the unit spot.
inline std::vector<market::Instrument> small_instruments(int n_steps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> strike(0.9, 1.1);
    std::uniform_real_distribution<double> price(0.02, 0.08);
    std::vector<market::Instrument> out;
    for (int k = 1; k <= n_steps; ++k) {
        const double t = static_cast<double>(k) / n_steps;
        out.push_back({t, strike(rng), market::OptionKind::Call, price(rng)});
        out.push_back({t, strike(rng), market::OptionKind::Put, price(rng)});
    }
    return out;
}

inline std::vector<double> maturities_of(const std::vector<market::Instrument>& ins) {
    std::vector<double> t;
    for (const auto& i : ins)
        if (t.empty() || t.back() != i.maturity)
            t.push_back(i.maturity);
    return t;
}

/// Potentials uniform in [-1, 1]; interior and terminal phi_nu sit U[0, 1] above
/// their lower bounds so the dual objective is finite.
inline DualPotentials random_potentials(const ChainProblem& problem, const CostParams& cost, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> slack(0.0, 1.0);
    DualPotentials pot = DualPotentials::zeros(problem);
    for (auto& v : pot.phi_m)
        for (double& p : v)
            p = u(rng);
    for (auto& v : pot.lambda)
        for (double& p : v)
            p = u(rng);
    for (double& p : pot.phi_nu.front())
        p = u(rng);
    const int n = problem.n_steps();
    for (int k = 1; k <= n; ++k)
        for (std::size_t i = 0; i < pot.phi_nu[k].size(); ++i)
            pot.phi_nu[k][i] = (k < n ? cost.f_star(pot.phi_m_at(k, i)) : 0.0) + slack(rng);
    return pot;
}

inline double rel_err(double a, double b) {
    if (a == b)
        return 0.0;
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

} // namespace smot::fixtures
