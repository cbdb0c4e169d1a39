#include "smot/acceleration.hpp"

#include "smot/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace smot {

AndersonAccelerator::AndersonAccelerator(int depth, double regularization)
    : depth_(depth), regularization_(regularization) {
    if (depth < 1)
        throw InvalidArgument("AndersonAccelerator: depth must be >= 1");
    if (!(regularization >= 0.0))
        throw InvalidArgument("AndersonAccelerator: regularization must be >= 0");
}

void AndersonAccelerator::reset() {
    xs_.clear();
    fs_.clear();
}

std::vector<double> AndersonAccelerator::step(const std::vector<double>& x, const std::vector<double>& gx) {
    if (x.size() != gx.size() || (!xs_.empty() && xs_.front().size() != x.size()))
        throw GridMismatch("AndersonAccelerator: inconsistent dimensions");
    std::vector<double> f(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        f[i] = gx[i] - x[i];
    xs_.push_back(x);
    fs_.push_back(std::move(f));
    if (static_cast<int>(xs_.size()) > depth_) {
        xs_.erase(xs_.begin());
        fs_.erase(fs_.begin());
    }
    const int cols = static_cast<int>(xs_.size()) - 1;
    if (cols == 0)
        return gx;

    const auto dim = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd df(dim, cols);
    Eigen::MatrixXd dg(dim, cols);
    for (int j = 0; j < cols; ++j) {
        const auto& f0 = fs_[j];
        const auto& f1 = fs_[j + 1];
        const auto& x0 = xs_[j];
        const auto& x1 = xs_[j + 1];
        for (Eigen::Index i = 0; i < dim; ++i) {
            df(i, j) = f1[i] - f0[i];
            dg(i, j) = (x1[i] + f1[i]) - (x0[i] + f0[i]);
        }
    }
    const Eigen::Map<const Eigen::VectorXd> fn(fs_.back().data(), dim);
    Eigen::MatrixXd normal = df.transpose() * df;
    const double scale = std::max(normal.trace() / cols, 1e-300);
    normal.diagonal().array() += regularization_ * scale;
    const Eigen::VectorXd gamma = normal.ldlt().solve(df.transpose() * fn);

    std::vector<double> out(gx);
    Eigen::Map<Eigen::VectorXd> next(out.data(), dim);
    next -= dg * gamma;
    if (!gamma.allFinite() || !next.allFinite()) {
        reset();
        return gx;
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Linear interpolation of values given on `from` at the points of `to`, clamped at the ends.
std::vector<double> interpolate_x(const SpatialGrid& from, std::span<const double> values, int stride, int comp,
                                  const SpatialGrid& to) {
    std::vector<double> out(to.size());
    const double x0 = from.x(0);
    const auto last = static_cast<double>(from.size() - 1);
    for (std::size_t i = 0; i < to.size(); ++i) {
        const double u = std::clamp((to.x(i) - x0) / from.dx, 0.0, last);
        const auto lo = static_cast<std::size_t>(std::floor(u));
        const std::size_t hi = std::min(lo + 1, from.size() - 1);
        const double a = u - static_cast<double>(lo);
        out[i] = (1.0 - a) * values[lo * stride + comp] + a * values[hi * stride + comp];
    }
    return out;
}

} // namespace

DualPotentials interpolate_potentials(const ChainProblem& coarse, const DualPotentials& coarse_pot,
                                      const ChainProblem& fine, const CostParams& cost) {
    const int nc = coarse.n_steps();
    const int nf = fine.n_steps();
    const double tc = coarse.reference().time_grid.horizon;
    const double tf = fine.reference().time_grid.horizon;
    if (std::abs(tc - tf) > 1e-12 * std::max(1.0, tc) || nf % nc != 0)
        throw GridMismatch("interpolate_potentials: the fine time grid must refine the coarse one");
    if (coarse.dim() != fine.dim())
        throw GridMismatch("interpolate_potentials: statistics differ");
    const auto& ci = coarse.constraints().instruments();
    const auto& fi = fine.constraints().instruments();
    if (ci.size() != fi.size())
        throw GridMismatch("interpolate_potentials: instrument sets differ");

    const int ratio = nf / nc;
    const int dim = fine.dim();
    DualPotentials out = DualPotentials::zeros(fine);
    const auto& cg = coarse.reference().grids;
    const auto& fg = fine.reference().grids;

    for (int k = 0; k <= nf; ++k) {
        const int kc = k / ratio;
        const double a = static_cast<double>(k % ratio) / ratio;
        // phi_nu
        {
            auto left = interpolate_x(cg[kc], coarse_pot.phi_nu[kc], 1, 0, fg[k]);
            if (a > 0.0) {
                auto right = interpolate_x(cg[kc + 1], coarse_pot.phi_nu[kc + 1], 1, 0, fg[k]);
                for (std::size_t i = 0; i < left.size(); ++i)
                    left[i] = (1.0 - a) * left[i] + a * right[i];
            }
            out.phi_nu[k] = std::move(left);
        }
        if (k == nf)
            continue;
        // phi_m: the last coarse interval has no right endpoint, so it is held constant
        for (int q = 0; q < dim; ++q) {
            auto left = interpolate_x(cg[kc], coarse_pot.phi_m[kc], dim, q, fg[k]);
            if (a > 0.0 && kc + 1 < nc) {
                auto right = interpolate_x(cg[kc + 1], coarse_pot.phi_m[kc + 1], dim, q, fg[k]);
                for (std::size_t i = 0; i < left.size(); ++i)
                    left[i] = (1.0 - a) * left[i] + a * right[i];
            }
            for (std::size_t i = 0; i < left.size(); ++i)
                out.phi_m[k][i * dim + q] = left[i];
        }
    }

    for (std::size_t i = 0; i < fi.size(); ++i) {
        if (std::abs(ci[i].maturity - fi[i].maturity) > 1e-12 || ci[i].strike != fi[i].strike ||
            ci[i].kind != fi[i].kind)
            throw GridMismatch("interpolate_potentials: instrument sets differ");
        const int kc = coarse.constraints().maturity_step(static_cast<int>(i));
        const int kf = fine.constraints().maturity_step(static_cast<int>(i));
        const auto& sc = coarse.constraints().at_step(kc);
        const auto& sf = fine.constraints().at_step(kf);
        const auto jc = std::find(sc.begin(), sc.end(), static_cast<int>(i)) - sc.begin();
        const auto jf = std::find(sf.begin(), sf.end(), static_cast<int>(i)) - sf.begin();
        out.lambda[kf][jf] = coarse_pot.lambda[kc][jc];
    }

    // interior phi_nu is determined by phi_m
    std::vector<double> neg(dim);
    for (int k = 1; k < nf; ++k)
        for (std::size_t i = 0; i < out.phi_nu[k].size(); ++i) {
            auto p = out.phi_m_at(k, i);
            for (int q = 0; q < dim; ++q)
                neg[q] = -p[q];
            out.phi_nu[k][i] = cost.f_star(neg);
        }
    std::fill(out.phi_nu[nf].begin(), out.phi_nu[nf].end(), 0.0);
    return out;
}

} // namespace smot
