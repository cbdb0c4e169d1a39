#pragma once

#include "smot/dual_core.hpp"

#include <cstddef>
#include <vector>

namespace smot {

/// Anderson mixing for a fixed-point map x -> g(x).
///
/// Keeps the last `depth` pairs (x_i, f_i = g(x_i) - x_i). With n stored pairs
/// the step minimises |f - dF gamma| over the n - 1 differences and returns
/// x + f - (dX + dF) gamma, so depth 1 is plain iteration.
class AndersonAccelerator {
public:
    explicit AndersonAccelerator(int depth = 5, double regularization = 1e-10);

    /// Records (x, gx) and returns the next iterate. A non-finite extrapolation
    /// falls back to gx and clears the history.
    std::vector<double> step(const std::vector<double>& x, const std::vector<double>& gx);

    void reset();
    int depth() const { return depth_; }
    std::size_t history_size() const { return xs_.size(); }

private:
    int depth_;
    double regularization_;
    std::vector<std::vector<double>> xs_;
    std::vector<std::vector<double>> fs_;
};

enum class RefineMode { InterpolatePotentials, RebuildReference };

/// Coarse-to-fine warm start: potentials of a coarse problem mapped onto a finer
/// time grid. phi_nu and phi_m are linear in t between coarse timesteps and in x
/// between grid points (clamped at the grid ends); Lambda is copied by maturity.
/// The fine time grid must refine the coarse one on the same horizon.
DualPotentials interpolate_potentials(const ChainProblem& coarse, const DualPotentials& coarse_pot,
                                      const ChainProblem& fine, const CostParams& cost);

} // namespace smot
