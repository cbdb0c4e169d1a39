#pragma once

#include "smot/discretization.hpp"
#include "smot/market_model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace smot {

enum class StatisticKind {
    MartingaleExp, ///< B(x, y) = 1 - exp(y - x)
    DriftVolPair,  ///< B(x, y) = (y - x, (y - x)^2 / 2)
};

/// Two-timestep statistic whose conditional expectation is penalised.
struct StatisticB {
    StatisticKind kind = StatisticKind::MartingaleExp;

    int dim() const { return kind == StatisticKind::MartingaleExp ? 1 : 2; }

    /// Writes the dim() components of B(x, x + dy).
    void evaluate(double dy, std::span<double> out) const;
};

/// Transitional part of the adjoint: phi_m(x) . B(x, y).
double delta_transition(std::span<const double> phi_m_at_x, const StatisticB& stat, double x, double y);

/// Instruments grouped by maturity step, with payoffs tabulated on the grids.
class PriceConstraints {
public:
    PriceConstraints() = default;
    PriceConstraints(const ReferenceMeasure& ref, std::vector<market::Instrument> instruments);

    const std::vector<market::Instrument>& instruments() const { return instruments_; }

    /// Global indices of the instruments maturing at step k.
    const std::vector<int>& at_step(int k) const { return by_step_[k]; }
    int count(int k) const { return static_cast<int>(by_step_[k].size()); }

    /// Payoff of the j-th instrument of step k on grid k.
    std::span<const double> payoff(int k, int j) const;

    int maturity_step(int instrument) const { return step_of_[instrument]; }

private:
    std::vector<market::Instrument> instruments_;
    std::vector<std::vector<int>> by_step_;
    std::vector<int> step_of_;
    std::vector<std::vector<double>> payoff_; // per step: count(k) x grid size, row major
    std::vector<std::size_t> grid_size_;
};

/// Cost parameters of the soft constraints: F(b) = c_mart |b|^2 and
/// C_i(g) = (w_price / 2)(g - c_i)^2.
struct CostParams {
    double c_mart = 1e4;
    double w_price = 1.0;

    /// Conjugate F*(p) = |p|^2 / (4 c_mart); c_mart == 0 means F == 0 and F* = indicator of {0}.
    double f_star(std::span<const double> p) const;
};

/// Reference chain, price constraints and statistic bundled with the lookup
/// tables the message recursions use.
class ChainProblem {
public:
    ChainProblem(ReferenceMeasure reference, std::vector<market::Instrument> instruments,
                 StatisticB statistic = {});

    const ReferenceMeasure& reference() const { return reference_; }
    const PriceConstraints& constraints() const { return constraints_; }
    const StatisticB& statistic() const { return statistic_; }

    int n_steps() const { return reference_.n_steps(); }
    double h() const { return reference_.h(); }
    int dim() const { return statistic_.dim(); }
    std::size_t grid_size(int k) const { return reference_.grids[k].size(); }

    /// B at lattice offset o (dim() consecutive values).
    const double* stat_at(long o) const { return &stat_table_[(o - min_offset_) * dim()]; }

    /// 1 - exp(o dx), the martingale statistic, whatever the penalised statistic is.
    double mart_at(long o) const { return mart_table_[o - min_offset_]; }

    /// o dx
    double step_at(long o) const { return static_cast<double>(o) * reference_.dx(); }

private:
    ReferenceMeasure reference_;
    PriceConstraints constraints_;
    StatisticB statistic_;
    long min_offset_ = 0;
    std::vector<double> stat_table_;
    std::vector<double> mart_table_;
};

/// Dual variable: phi_nu[k] on grid k (k = 0..N), phi_m[k] on grid k with dim
/// components per point (k = 0..N-1), lambda[k] with one multiplier per
/// instrument maturing at step k.
struct DualPotentials {
    std::vector<std::vector<double>> phi_nu;
    std::vector<std::vector<double>> phi_m;
    std::vector<std::vector<double>> lambda;
    int dim = 1;

    static DualPotentials zeros(const ChainProblem& problem);

    std::span<const double> phi_m_at(int k, std::size_t i) const {
        return {phi_m[k].data() + i * dim, static_cast<std::size_t>(dim)};
    }

    bool all_finite() const;
};

/// Forward (psi_up) and backward (psi_down) log-messages with staleness flags.
struct MessageCache {
    std::vector<std::vector<double>> psi_up;
    std::vector<std::vector<double>> psi_down;
    std::vector<char> up_dirty;
    std::vector<char> down_dirty;

    /// psi_up[0] = log nu0, psi_down[N] = 0; everything else marked stale.
    static MessageCache init(const ChainProblem& problem);

    /// phi_m_k changed: forward messages after k and backward messages up to k are stale.
    void invalidate(int k);
    /// phi_nu_k or Lambda_k changed: forward messages after k and backward messages before k are stale.
    void invalidate_node(int k);
    void invalidate_all();
    bool up_clean() const;
    bool down_clean() const;
};

/// phi_nu_k + Lambda_k . G_k / h on grid k.
std::vector<double> node_potential(const ChainProblem& problem, const DualPotentials& pot, int k);

/// psi_up[k+1] from psi_up[k] through kernel k.
void update_psi_up(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache, int k);

/// psi_down[k-1] from psi_down[k] through kernel k-1. When mart_mean is given it
/// receives E[1 - exp(X_k - X_{k-1}) | X_{k-1} = x] under the current law.
void update_psi_down(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache, int k,
                     std::vector<double>* mart_mean = nullptr);

/// Recomputes every stale backward message (from N down to 0).
void refresh_down(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache);

/// Recomputes every stale forward message (from 0 up to N).
void refresh_up(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache);

void refresh_all(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache);

/// log nu_k(x) = psi_up + phi_nu + Lambda.G/h + psi_down.
std::vector<double> log_marginal(const ChainProblem& problem, const DualPotentials& pot,
                                 const MessageCache& cache, int k);

/// Marginal mass of each grid point at step k (sums to the path mass, not
/// necessarily 1 away from the optimum).
std::vector<double> marginal_density(const ChainProblem& problem, const DualPotentials& pot,
                                     const MessageCache& cache, int k);

/// Row-banded matrix with the same sparsity as a transition kernel.
struct BandedMatrix {
    std::vector<int> first;
    std::vector<std::size_t> start; // rows() + 1 offsets into values
    std::vector<double> values;

    std::size_t rows() const { return first.size(); }
    int count(std::size_t i) const { return static_cast<int>(start[i + 1] - start[i]); }
    double at(std::size_t i, int j) const;
    double row_sum(std::size_t i) const;
};

/// Joint law of (X_k, X_{k+1}).
BandedMatrix joint_density(const ChainProblem& problem, const DualPotentials& pot,
                           const MessageCache& cache, int k);

/// log of the total mass E_ref[exp(Delta Phi / h)]; needs clean forward or backward messages.
double log_path_mass(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache);

/// Dual objective
///   h <phi_nu_0 - F*(-phi_m_0), nu0> - sum_{0<k<N} iota{phi_nu_k >= F*(-phi_m_k)}
///   - iota{phi_nu_N >= 0} - sum_i C_i*(-lambda_i) - h E_ref[exp(Delta Phi / h)].
/// Returns -infinity when a constraint indicator is violated.
double dual_objective(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache,
                      const CostParams& cost);

/// Numerically stable log(sum(exp(v))); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

} // namespace smot
