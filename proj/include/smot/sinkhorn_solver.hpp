#pragma once

#include "smot/dual_core.hpp"

#include <functional>
#include <vector>

namespace smot {

struct SolverConfig {
    double epsilon = 1e-6;     // stopping tolerance on e_max
    int max_sweeps = 500;
    double newton_tol = 1e-10; // absolute gradient tolerance of the inner Newton solves
    int newton_max_iter = 50;
    double c_mart = 1e4;
    double w_price = 1.0;
    bool eliminate_phi_nu = false; // measure e_max without the saturated phi_nu_k, k >= 1
    int anderson_depth = 5;        // stored iterates; 1 disables acceleration

    CostParams cost() const { return {c_mart, w_price}; }
    void validate() const;
};

struct SweepReport {
    int sweep_index = 0;
    double e_max = 0.0;
    double dual_value = 0.0;
    double price_error_l2 = 0.0;
    double martingale_error_l2 = 0.0;
    double wall_ms = 0.0;
    bool accelerated = false; // the carried iterate came from an accepted Anderson step
};

/// Potentials together with their messages. After a sweep the cache is clean
/// and mart_mean[k][x] holds E[1 - exp(X_{k+1} - X_k) | X_k = x].
struct SolverState {
    DualPotentials potentials;
    MessageCache cache;
    std::vector<std::vector<double>> mart_mean;

    static SolverState start(const ChainProblem& problem);
    static SolverState start(const ChainProblem& problem, DualPotentials initial);
};

/// k = 0: phi_nu_0 solves the initial marginal constraint in closed form on the
/// support of nu0. 0 < k < N: phi_nu_k = F*(-phi_m_k). k = N: phi_nu_N = 0.
/// Needs clean messages at k.
void solve_marginal_block(const ChainProblem& problem, SolverState& state, const SolverConfig& config, int k);

/// Damped Newton on the price multipliers maturing at step k.
void solve_price_block(const ChainProblem& problem, SolverState& state, const SolverConfig& config, int k);

/// Pointwise Newton on (phi_nu_k, phi_m_k) jointly, for k < N. Also refreshes
/// psi_down[k]. Needs clean psi_up[k] and psi_down[k + 1].
void solve_driftvol_block(const ChainProblem& problem, SolverState& state, const SolverConfig& config, int k);

/// Gradient of the pointwise drift/vol subproblem at the current phi_m_k,
/// phi / (2 c_mart) + E_q[B] / h, with dim() entries per grid point.
std::vector<double> driftvol_gradient(const ChainProblem& problem, const SolverState& state,
                                      const SolverConfig& config, int k);

/// Flattened potentials in the layout used for e_max and Anderson.
std::vector<double> flatten(const DualPotentials& pot, bool eliminate_phi_nu);
void unflatten(std::span<const double> flat, DualPotentials& pot, bool eliminate_phi_nu);

/// Re-imposes phi_nu_k = F*(-phi_m_k) for 0 < k < N and phi_nu_N = 0.
void saturate_phi_nu(DualPotentials& pot, const CostParams& cost);

/// Brings every message up to date and recomputes mart_mean.
void refresh_state(const ChainProblem& problem, SolverState& state);

/// Model price of every instrument from clean messages (normalised marginals).
std::vector<double> model_prices(const ChainProblem& problem, const SolverState& state);

/// sqrt(sum_i (g_i - c_i)^2)
double price_error_l2(const ChainProblem& problem, std::span<const double> prices);

/// sqrt(h sum_k sum_x nu_k(x) b_k(x)^2) with b_k = mart_mean / h and normalised nu_k.
double martingale_error_l2(const ChainProblem& problem, const SolverState& state);

/// One Gauss-Seidel sweep. e_max = |Phi_new - Phi_old|_inf / max(|Phi_old|_inf, 1).
SweepReport sweep(const ChainProblem& problem, SolverState& state, const SolverConfig& config);

struct RunResult {
    SolverState state;
    std::vector<SweepReport> history;
    bool max_sweeps_reached = false;
};

using SweepCallback = std::function<void(const SweepReport&)>;

/// Sweeps until e_max < epsilon or max_sweeps, with Anderson acceleration of the
/// sweep map when anderson_depth > 1.
RunResult run(const ChainProblem& problem, const SolverConfig& config, DualPotentials initial,
              const SweepCallback& on_sweep = {});
RunResult run(const ChainProblem& problem, const SolverConfig& config, const SweepCallback& on_sweep = {});

} // namespace smot
