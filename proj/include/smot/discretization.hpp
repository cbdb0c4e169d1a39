#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace smot {

/// Function of (log-price, time), used for the reference volatility and drift.
using LocalFunction = std::function<double(double x, double t)>;

LocalFunction constant_function(double value);

/// Drift -sigma(x, t)^2 / 2 that makes exp(X) a martingale under the Euler chain.
LocalFunction martingale_drift(LocalFunction vol);

/// Regular grid t_k = k h, k = 0..n_steps, with every maturity mapped to an index.
struct TimeGrid {
    int n_steps = 0;
    double horizon = 0.0;
    double h = 0.0;
    std::vector<std::pair<double, int>> maturity_map;

    double time(int k) const { return k * h; }

    /// Timestep index of a maturity; throws MaturityOffGrid when it is not on the grid.
    int index_of(double maturity) const;
};

TimeGrid build_time_grid(double horizon, int n_steps, std::span<const double> maturities);

/// Uniform log-price grid. All grids of a reference measure share dx and live on
/// one lattice x = x_center + g dx, so grid k covers the global indices
/// [first_index, first_index + size).
struct SpatialGrid {
    double x_center = 0.0;
    double dx = 0.0;
    long first_index = 0;
    double half_width = 0.0;
    std::vector<double> centers;

    std::size_t size() const { return centers.size(); }
    double x(std::size_t i) const { return centers[i]; }
    long global_index(std::size_t i) const { return first_index + static_cast<long>(i); }

    /// Local index of the grid point nearest to x (clamped to the grid).
    std::size_t nearest(double x) const;
};

/// Builds per-timestep grids with half width delta * v_k, where
/// v_k = sqrt(v0^2 + h sum_{l<=k} sigma_l^2), and spacing min_k sigma_k sqrt(h) / k_pts.
/// Grid k is centred on x_center shifted by the accumulated reference drift.
std::vector<SpatialGrid> build_spatial_grids(const TimeGrid& time_grid, const LocalFunction& ref_vol,
                                             double v0, double delta, double k_pts, double x_center,
                                             const LocalFunction& ref_drift = {});

/// Banded Euler-Maruyama transition matrix between two consecutive grids.
///
/// Rows are truncated Gaussians N(x + mu h, sigma^2 h) restricted to the sliding
/// window x + mu h +- delta sigma sqrt(h) and renormalised. Each row is kept in
/// parametric form (band, mean, precision, log normaliser) so the weights cost
/// no memory beyond O(rows); weight(i, j) materialises an entry.
class TransitionKernel {
public:
    struct Row {
        int first = 0;
        int count = 0;
        double mean = 0.0;     // expected displacement mu h
        double inv_var = 0.0;  // 1 / (sigma^2 h)
        double log_norm = 0.0; // minus log of the truncated row sum
    };

    TransitionKernel() = default;
    TransitionKernel(const SpatialGrid& src, const SpatialGrid& dst, double t, double h,
                     const LocalFunction& ref_vol, const LocalFunction& ref_drift, double delta);

    std::size_t rows() const { return rows_.size(); }
    std::size_t cols() const { return src_lo_.size(); }
    const Row& row(std::size_t i) const { return rows_[i]; }
    double dx() const { return dx_; }

    /// Lattice offset (y - x) / dx between destination j and source i.
    long offset(std::size_t i, int j) const {
        return lattice_shift_ + j - static_cast<long>(i);
    }

    double log_weight(std::size_t i, int j) const {
        const Row& r = rows_[i];
        const double d = static_cast<double>(offset(i, j)) * dx_ - r.mean;
        return r.log_norm - 0.5 * r.inv_var * d * d;
    }

    /// Transition probability; zero outside the band.
    double weight(std::size_t i, int j) const;

    /// Smallest and largest source rows whose band may contain destination j
    /// (empty range when lo > hi).
    int source_lo(int j) const { return src_lo_[j]; }
    int source_hi(int j) const { return src_hi_[j]; }

    long min_offset() const { return min_offset_; }
    long max_offset() const { return max_offset_; }

    /// Number of band entries over all rows.
    std::size_t nnz() const { return nnz_; }

private:
    std::vector<Row> rows_;
    std::vector<int> src_lo_;
    std::vector<int> src_hi_;
    double dx_ = 0.0;
    long lattice_shift_ = 0;
    long min_offset_ = 0;
    long max_offset_ = 0;
    std::size_t nnz_ = 0;
};

std::vector<TransitionKernel> build_reference_kernels(const std::vector<SpatialGrid>& grids,
                                                      const TimeGrid& time_grid,
                                                      const LocalFunction& ref_vol,
                                                      const LocalFunction& ref_drift, double delta);

/// Dirac at the nearest grid point when v0 == 0, otherwise a renormalised
/// discrete Gaussian of standard deviation v0 centred at x0.
std::vector<double> build_initial_density(const SpatialGrid& grid0, double x0, double v0);

struct ReferenceSpec {
    double horizon = 1.0;
    int n_steps = 20;
    std::vector<double> maturities;
    LocalFunction ref_vol = constant_function(0.2);
    LocalFunction ref_drift; // empty: martingale drift of ref_vol
    double x0 = 0.0;
    double v0 = 0.0;
    double delta = 5.0;
    double k_pts = 50.0;
};

/// Law of the Euler chain used as the entropic reference.
struct ReferenceMeasure {
    TimeGrid time_grid;
    std::vector<SpatialGrid> grids;
    std::vector<TransitionKernel> kernels;
    std::vector<double> nu0;
    LocalFunction ref_vol;
    LocalFunction ref_drift;
    double x0 = 0.0;
    double v0 = 0.0;
    double delta = 0.0;
    double k_pts = 0.0;

    int n_steps() const { return time_grid.n_steps; }
    double h() const { return time_grid.h; }
    double dx() const { return grids.front().dx; }
};

ReferenceMeasure build_reference_measure(const ReferenceSpec& spec);

} // namespace smot
