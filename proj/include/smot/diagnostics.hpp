#pragma once

#include "smot/dual_core.hpp"

#include <vector>

namespace smot {

/// Conditional moments of the calibrated chain, one vector per timestep k < N:
///   beta  = E[dX | X_k = x] / h
///   alpha = E[dX^2 | X_k = x] / h
///   mart  = E[1 - exp(dX) | X_k = x] / h
///   local_vol = sqrt(max(alpha - h beta^2, 0))
/// Points whose marginal mass is below 1e-300 are masked and report zeros.
struct Characteristics {
    std::vector<std::vector<double>> beta;
    std::vector<std::vector<double>> alpha;
    std::vector<std::vector<double>> local_vol;
    std::vector<std::vector<double>> mart_stat;
    std::vector<std::vector<char>> masked;
};

/// Needs clean messages.
Characteristics extract_characteristics(const ChainProblem& problem, const DualPotentials& pot,
                                        const MessageCache& cache);

/// sigma_k(x) from the conditional variance of the rows of joint_density(k);
/// an independent code path for the same quantity as Characteristics::local_vol.
std::vector<double> local_vol_from_joint(const ChainProblem& problem, const DualPotentials& pot,
                                         const MessageCache& cache, int k);

/// Local volatility on the (t_k, x) lattice.
struct LocalVolSurface {
    std::vector<double> t;
    std::vector<std::vector<double>> x;
    std::vector<std::vector<double>> sigma;
    std::vector<std::vector<char>> masked;
};

LocalVolSurface local_vol_surface(const ChainProblem& problem, const Characteristics& chars);

struct EntropyReport {
    double h_kl = 0.0;    // h KL(P^h | reference chain), summed over transitions
    double s_limit = 0.0; // 1/2 sum_k h E[sigma^2/sigma_ref^2 - 1 - log(sigma^2/sigma_ref^2)]
};

/// Needs clean messages. Marginals are normalised before weighting.
EntropyReport specific_entropy(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache,
                               const Characteristics& chars);

/// KL(N(mu1, s1^2) | N(mu0, s0^2)).
double normal_kl(double mu1, double s1, double mu0, double s0);

} // namespace smot
