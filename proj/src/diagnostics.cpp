#include "smot/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTiny = -690.7755278982137; // log(1e-300)

// Per-row quantities of the conditional law of X_{k+1} given X_k.
struct RowMoments {
    double beta = 0.0;
    double alpha = 0.0;
    double mart = 0.0;
    double kl = 0.0; // KL of the row against the reference row
};

template <class F>
void for_each_row(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache, int k, F&& f) {
    const auto& ker = problem.reference().kernels[k];
    const double inv_h = 1.0 / problem.h();
    const int dim = pot.dim;
    std::vector<double> d = node_potential(problem, pot, k + 1);
    for (std::size_t j = 0; j < d.size(); ++j)
        d[j] += cache.psi_down[k + 1][j];
    const std::vector<double> lm = log_marginal(problem, pot, cache, k);
    const int rows = static_cast<int>(ker.rows());

#pragma omp parallel
    {
        std::vector<double> v;
#pragma omp for schedule(static)
        for (int i = 0; i < rows; ++i) {
            RowMoments out;
            if (!(lm[i] >= kLogTiny)) {
                f(i, out, true);
                continue;
            }
            const auto& r = ker.row(i);
            v.resize(r.count);
            const double* phi = pot.phi_m[k].data() + static_cast<std::size_t>(i) * dim;
            double m = kNegInf;
            for (int c = 0; c < r.count; ++c) {
                const int j = r.first + c;
                const double* b = problem.stat_at(ker.offset(i, j));
                double t = d[j];
                for (int q = 0; q < dim; ++q)
                    t += phi[q] * b[q] * inv_h;
                v[c] = t; // log(q / w) up to the row normaliser
                m = std::max(m, t + ker.log_weight(i, j));
            }
            double s = 0.0;
            for (int c = 0; c < r.count; ++c)
                s += std::exp(v[c] + ker.log_weight(i, r.first + c) - m);
            const double lse = m + std::log(s);
            for (int c = 0; c < r.count; ++c) {
                const int j = r.first + c;
                const long o = ker.offset(i, j);
                const double q = std::exp(v[c] + ker.log_weight(i, j) - lse);
                const double dy = problem.step_at(o);
                out.beta += q * dy;
                out.alpha += q * dy * dy;
                out.mart += q * problem.mart_at(o);
                if (q > 0.0)
                    out.kl += q * (v[c] - lse);
            }
            out.beta *= inv_h;
            out.alpha *= inv_h;
            out.mart *= inv_h;
            f(i, out, false);
        }
    }
}

std::vector<double> normalised(const std::vector<double>& log_mass) {
    double m = kNegInf;
    for (double v : log_mass)
        m = std::max(m, v);
    std::vector<double> w(log_mass.size(), 0.0);
    if (m == kNegInf)
        return w;
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(log_mass[i] - m);
        s += w[i];
    }
    for (double& x : w)
        x /= s;
    return w;
}

} // namespace

Characteristics extract_characteristics(const ChainProblem& problem, const DualPotentials& pot,
                                        const MessageCache& cache) {
    const int n = problem.n_steps();
    const double h = problem.h();
    Characteristics ch;
    ch.beta.resize(n);
    ch.alpha.resize(n);
    ch.local_vol.resize(n);
    ch.mart_stat.resize(n);
    ch.masked.resize(n);
    for (int k = 0; k < n; ++k) {
        const std::size_t size = problem.grid_size(k);
        ch.beta[k].assign(size, 0.0);
        ch.alpha[k].assign(size, 0.0);
        ch.local_vol[k].assign(size, 0.0);
        ch.mart_stat[k].assign(size, 0.0);
        ch.masked[k].assign(size, 0);
        for_each_row(problem, pot, cache, k, [&](int i, const RowMoments& m, bool masked) {
            if (masked) {
                ch.masked[k][i] = 1;
                return;
            }
            ch.beta[k][i] = m.beta;
            ch.alpha[k][i] = m.alpha;
            ch.mart_stat[k][i] = m.mart;
            ch.local_vol[k][i] = std::sqrt(std::max(m.alpha - h * m.beta * m.beta, 0.0));
        });
    }
    return ch;
}

std::vector<double> local_vol_from_joint(const ChainProblem& problem, const DualPotentials& pot,
                                         const MessageCache& cache, int k) {
    const BandedMatrix joint = joint_density(problem, pot, cache, k);
    const auto& ker = problem.reference().kernels[k];
    const double h = problem.h();
    std::vector<double> out(joint.rows(), 0.0);
    for (std::size_t i = 0; i < joint.rows(); ++i) {
        const double mass = joint.row_sum(i);
        if (!(mass >= 1e-300))
            continue;
        double mean = 0.0;
        for (int c = 0; c < joint.count(i); ++c)
            mean += joint.values[joint.start[i] + c] * problem.step_at(ker.offset(i, joint.first[i] + c));
        mean /= mass;
        double var = 0.0;
        for (int c = 0; c < joint.count(i); ++c) {
            const double e = problem.step_at(ker.offset(i, joint.first[i] + c)) - mean;
            var += joint.values[joint.start[i] + c] * e * e;
        }
        out[i] = std::sqrt(std::max(var / mass, 0.0) / h);
    }
    return out;
}

LocalVolSurface local_vol_surface(const ChainProblem& problem, const Characteristics& chars) {
    LocalVolSurface s;
    const auto& grids = problem.reference().grids;
    for (int k = 0; k < problem.n_steps(); ++k) {
        s.t.push_back(problem.reference().time_grid.time(k));
        s.x.push_back(grids[k].centers);
        s.sigma.push_back(chars.local_vol[k]);
        s.masked.push_back(chars.masked[k]);
    }
    return s;
}

EntropyReport specific_entropy(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache,
                               const Characteristics& chars) {
    const int n = problem.n_steps();
    const double h = problem.h();
    const auto& ref = problem.reference();
    EntropyReport rep;
    for (int k = 0; k < n; ++k) {
        const std::vector<double> w = normalised(log_marginal(problem, pot, cache, k));
        std::vector<double> kl(w.size(), 0.0);
        for_each_row(problem, pot, cache, k, [&](int i, const RowMoments& m, bool masked) {
            if (!masked)
                kl[i] = m.kl;
        });
        const double t = ref.time_grid.time(k);
        double step_kl = 0.0;
        double step_limit = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] == 0.0 || chars.masked[k][i])
                continue;
            step_kl += w[i] * kl[i];
            const double sref = ref.ref_vol(ref.grids[k].x(i), t);
            const double r = chars.local_vol[k][i] * chars.local_vol[k][i] / (sref * sref);
            if (r > 0.0)
                step_limit += w[i] * (r - 1.0 - std::log(r));
            else
                step_limit = std::numeric_limits<double>::infinity();
        }
        rep.h_kl += h * step_kl;
        rep.s_limit += 0.5 * h * step_limit;
    }
    return rep;
}

double normal_kl(double mu1, double s1, double mu0, double s0) {
    const double r = s1 / s0;
    const double z = (mu1 - mu0) / s0;
    return -std::log(r) + 0.5 * (r * r + z * z) - 0.5;
}

} // namespace smot
