#include "smot/discretization.hpp"

#include "smot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace smot {

LocalFunction constant_function(double value) {
    return [value](double, double) { return value; };
}

LocalFunction martingale_drift(LocalFunction vol) {
    return [vol = std::move(vol)](double x, double t) {
        const double s = vol(x, t);
        return -0.5 * s * s;
    };
}

int TimeGrid::index_of(double maturity) const {
    for (const auto& [t, k] : maturity_map)
        if (t == maturity)
            return k;
    const double ratio = maturity / h;
    const double k = std::round(ratio);
    if (std::abs(ratio - k) > 1e-9 * std::max(1.0, std::abs(ratio)) || k < 0 || k > n_steps) {
        std::ostringstream os;
        os << "maturity " << maturity << " is not on the time grid (T=" << horizon
           << ", n_steps=" << n_steps << ")";
        throw MaturityOffGrid(os.str());
    }
    return static_cast<int>(k);
}

TimeGrid build_time_grid(double horizon, int n_steps, std::span<const double> maturities) {
    if (!(horizon > 0.0) || n_steps < 1)
        throw InvalidArgument("build_time_grid: horizon must be positive and n_steps >= 1");
    TimeGrid grid;
    grid.n_steps = n_steps;
    grid.horizon = horizon;
    grid.h = horizon / n_steps;
    for (double m : maturities) {
        const int k = grid.index_of(m);
        if (std::none_of(grid.maturity_map.begin(), grid.maturity_map.end(),
                         [&](const auto& p) { return p.first == m; }))
            grid.maturity_map.emplace_back(m, k);
    }
    std::sort(grid.maturity_map.begin(), grid.maturity_map.end());
    return grid;
}

std::size_t SpatialGrid::nearest(double x) const {
    const double r = std::round((x - centers.front()) / dx);
    if (r <= 0.0)
        return 0;
    return std::min(static_cast<std::size_t>(r), size() - 1);
}

std::vector<SpatialGrid> build_spatial_grids(const TimeGrid& time_grid, const LocalFunction& ref_vol,
                                             double v0, double delta, double k_pts, double x_center,
                                             const LocalFunction& ref_drift) {
    if (!(delta > 0.0) || !(k_pts >= 1.0) || !(v0 >= 0.0))
        throw InvalidArgument("build_spatial_grids: need delta > 0, k_pts >= 1, v0 >= 0");
    const int n = time_grid.n_steps;
    const double h = time_grid.h;
    const double sqrt_h = std::sqrt(h);

    std::vector<double> sigma(n + 1);
    double dx = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= n; ++k) {
        sigma[k] = ref_vol(x_center, time_grid.time(k));
        if (!(sigma[k] > 0.0))
            throw InvalidArgument("build_spatial_grids: reference volatility must be positive");
        dx = std::min(dx, sigma[k] * sqrt_h / k_pts);
    }

    std::vector<SpatialGrid> grids(n + 1);
    double var = v0 * v0;
    double drift = 0.0;
    for (int k = 0; k <= n; ++k) {
        var += h * sigma[k] * sigma[k];
        SpatialGrid& g = grids[k];
        g.x_center = x_center;
        g.dx = dx;
        g.half_width = delta * std::sqrt(var);
        const long half = static_cast<long>(std::floor(g.half_width / dx + 1e-9));
        const long centre = static_cast<long>(std::lround(drift / dx));
        g.first_index = centre - half;
        g.centers.resize(2 * half + 1);
        for (long j = 0; j < 2 * half + 1; ++j)
            g.centers[j] = x_center + static_cast<double>(g.first_index + j) * dx;
        if (ref_drift)
            drift += ref_drift(x_center, time_grid.time(k)) * h;
        else
            drift += -0.5 * sigma[k] * sigma[k] * h;
    }
    return grids;
}

TransitionKernel::TransitionKernel(const SpatialGrid& src, const SpatialGrid& dst, double t, double h,
                                   const LocalFunction& ref_vol, const LocalFunction& ref_drift,
                                   double delta)
    : dx_(src.dx), lattice_shift_(dst.first_index - src.first_index) {
    if (std::abs(src.dx - dst.dx) > 1e-15 * src.dx)
        throw GridMismatch("TransitionKernel: grids must share their spacing");
    const auto n_dst = static_cast<long>(dst.size());
    rows_.resize(src.size());
    src_lo_.assign(dst.size(), std::numeric_limits<int>::max());
    src_hi_.assign(dst.size(), -1);
    min_offset_ = std::numeric_limits<long>::max();
    max_offset_ = std::numeric_limits<long>::min();

    for (std::size_t i = 0; i < src.size(); ++i) {
        const double x = src.x(i);
        const double sigma = ref_vol(x, t);
        const double mu = ref_drift(x, t);
        if (!(sigma > 0.0) || !std::isfinite(mu))
            throw InvalidArgument("TransitionKernel: invalid reference coefficients");
        Row& r = rows_[i];
        r.mean = mu * h;
        r.inv_var = 1.0 / (sigma * sigma * h);
        const double reach = delta * sigma * std::sqrt(h);
        // band in lattice offsets relative to the source point
        const long lo_off = static_cast<long>(std::ceil((r.mean - reach) / dx_ - 1e-9));
        const long hi_off = static_cast<long>(std::floor((r.mean + reach) / dx_ + 1e-9));
        const long base = static_cast<long>(i) - lattice_shift_;
        const long j_lo = std::max(0L, base + lo_off);
        const long j_hi = std::min(n_dst - 1, base + hi_off);
        if (j_lo > j_hi) {
            std::ostringstream os;
            os << "transition band of x=" << x << " at t=" << t << " contains no grid point";
            throw EmptyBand(os.str());
        }
        r.first = static_cast<int>(j_lo);
        r.count = static_cast<int>(j_hi - j_lo + 1);

        double m = -std::numeric_limits<double>::infinity();
        for (int j = r.first; j < r.first + r.count; ++j) {
            const double d = static_cast<double>(offset(i, j)) * dx_ - r.mean;
            m = std::max(m, -0.5 * r.inv_var * d * d);
        }
        double s = 0.0;
        for (int j = r.first; j < r.first + r.count; ++j) {
            const double d = static_cast<double>(offset(i, j)) * dx_ - r.mean;
            s += std::exp(-0.5 * r.inv_var * d * d - m);
        }
        r.log_norm = -(m + std::log(s));

        nnz_ += static_cast<std::size_t>(r.count);
        min_offset_ = std::min(min_offset_, offset(i, r.first));
        max_offset_ = std::max(max_offset_, offset(i, r.first + r.count - 1));
        for (int j = r.first; j < r.first + r.count; ++j) {
            src_lo_[j] = std::min(src_lo_[j], static_cast<int>(i));
            src_hi_[j] = std::max(src_hi_[j], static_cast<int>(i));
        }
    }
}

double TransitionKernel::weight(std::size_t i, int j) const {
    const Row& r = rows_[i];
    if (j < r.first || j >= r.first + r.count)
        return 0.0;
    return std::exp(log_weight(i, j));
}

std::vector<TransitionKernel> build_reference_kernels(const std::vector<SpatialGrid>& grids,
                                                      const TimeGrid& time_grid,
                                                      const LocalFunction& ref_vol,
                                                      const LocalFunction& ref_drift, double delta) {
    if (static_cast<int>(grids.size()) != time_grid.n_steps + 1)
        throw GridMismatch("build_reference_kernels: one grid per timestep required");
    const LocalFunction drift = ref_drift ? ref_drift : martingale_drift(ref_vol);
    std::vector<TransitionKernel> kernels;
    kernels.reserve(time_grid.n_steps);
    for (int k = 0; k < time_grid.n_steps; ++k)
        kernels.emplace_back(grids[k], grids[k + 1], time_grid.time(k), time_grid.h, ref_vol, drift,
                             delta);
    return kernels;
}

std::vector<double> build_initial_density(const SpatialGrid& grid0, double x0, double v0) {
    std::vector<double> nu(grid0.size(), 0.0);
    if (v0 == 0.0) {
        nu[grid0.nearest(x0)] = 1.0;
        return nu;
    }
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nu.size(); ++i) {
        const double z = (grid0.x(i) - x0) / v0;
        nu[i] = -0.5 * z * z;
        m = std::max(m, nu[i]);
    }
    double s = 0.0;
    for (double& v : nu) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : nu)
        v /= s;
    return nu;
}

ReferenceMeasure build_reference_measure(const ReferenceSpec& spec) {
    ReferenceMeasure ref;
    ref.time_grid = build_time_grid(spec.horizon, spec.n_steps, spec.maturities);
    ref.ref_vol = spec.ref_vol;
    ref.ref_drift = spec.ref_drift ? spec.ref_drift : martingale_drift(spec.ref_vol);
    ref.x0 = spec.x0;
    ref.v0 = spec.v0;
    ref.delta = spec.delta;
    ref.k_pts = spec.k_pts;
    ref.grids = build_spatial_grids(ref.time_grid, ref.ref_vol, spec.v0, spec.delta, spec.k_pts,
                                    spec.x0, ref.ref_drift);
    ref.kernels =
        build_reference_kernels(ref.grids, ref.time_grid, ref.ref_vol, ref.ref_drift, spec.delta);
    ref.nu0 = build_initial_density(ref.grids.front(), spec.x0, spec.v0);
    return ref;
}

} // namespace smot
