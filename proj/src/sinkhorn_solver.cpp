#include "smot/sinkhorn_solver.hpp"

#include "smot/acceleration.hpp"
#include "smot/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace smot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTiny = -690.7755278982137; // log(1e-300)

double sup_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

// Row data of the pointwise drift/vol problem: exponents e_c = log w + D_{k+1}(y)
// and statistic values B_c along the band of one source point.
struct PointRow {
    std::vector<double> e;
    std::vector<double> b; // count * dim
    std::vector<double> w;
};

void load_row(const ChainProblem& problem, const TransitionKernel& ker, const std::vector<double>& d,
              std::size_t i, PointRow& row) {
    const auto& r = ker.row(i);
    const int dim = problem.dim();
    row.e.resize(r.count);
    row.b.resize(static_cast<std::size_t>(r.count) * dim);
    row.w.resize(r.count);
    for (int c = 0; c < r.count; ++c) {
        const int j = r.first + c;
        const long o = ker.offset(i, j);
        row.e[c] = ker.log_weight(i, j) + d[j];
        const double* s = problem.stat_at(o);
        for (int q = 0; q < dim; ++q)
            row.b[c * dim + q] = s[q];
    }
}

// log S(phi) with the tilted law q in row.w (normalised); mean and covariance of B under q.
double eval_row(PointRow& row, const double* phi, int dim, double inv_h, double* mean, double* cov) {
    const std::size_t n = row.e.size();
    double m = kNegInf;
    for (std::size_t c = 0; c < n; ++c) {
        double a = row.e[c];
        for (int q = 0; q < dim; ++q)
            a += phi[q] * row.b[c * dim + q] * inv_h;
        row.w[c] = a;
        m = std::max(m, a);
    }
    if (m == kNegInf) {
        for (int q = 0; q < dim; ++q)
            mean[q] = 0.0;
        for (int q = 0; q < dim * dim; ++q)
            cov[q] = 0.0;
        return kNegInf;
    }
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        row.w[c] = std::exp(row.w[c] - m);
        s += row.w[c];
    }
    const double inv_s = 1.0 / s;
    for (int q = 0; q < dim; ++q) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c)
            acc += row.w[c] * row.b[c * dim + q];
        mean[q] = acc * inv_s;
    }
    for (int p = 0; p < dim; ++p)
        for (int q = p; q < dim; ++q) {
            double acc = 0.0;
            for (std::size_t c = 0; c < n; ++c)
                acc += row.w[c] * (row.b[c * dim + p] - mean[p]) * (row.b[c * dim + q] - mean[q]);
            cov[p * dim + q] = cov[q * dim + p] = acc * inv_s;
        }
    return m + std::log(s);
}

// Minimises |phi|^2 / (4c) + log S(phi) for a scalar statistic: Newton inside a
// shrinking sign bracket, bisection when Newton leaves it.
double minimise_scalar(PointRow& row, double phi, double c_mart, double inv_h, const SolverConfig& config,
                       double& log_s) {
    double bmin = std::numeric_limits<double>::infinity();
    double bmax = -bmin;
    for (double b : row.b) {
        bmin = std::min(bmin, b);
        bmax = std::max(bmax, b);
    }
    // the minimiser is -2c E_q[B] / h, so it lies between these bounds
    double lo = -2.0 * c_mart * bmax * inv_h;
    double hi = -2.0 * c_mart * bmin * inv_h;
    phi = std::clamp(phi, lo, hi);
    double mean = 0.0;
    double var = 0.0;
    const int limit = config.newton_max_iter + 200;
    for (int it = 0; it < limit; ++it) {
        log_s = eval_row(row, &phi, 1, inv_h, &mean, &var);
        const double g = phi / (2.0 * c_mart) + mean * inv_h;
        if (std::abs(g) <= config.newton_tol)
            return phi;
        (g < 0.0 ? lo : hi) = phi;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(phi)))
            return phi;
        double next = 0.5 * (lo + hi);
        if (it < config.newton_max_iter) {
            const double curv = 1.0 / (2.0 * c_mart) + var * inv_h * inv_h;
            const double trial = phi - g / curv;
            if (trial > lo && trial < hi)
                next = trial;
        }
        phi = next;
    }
    log_s = eval_row(row, &phi, 1, inv_h, &mean, &var);
    return phi;
}

// Two-component version: damped Newton with Armijo backtracking on the convex objective.
void minimise_pair(PointRow& row, double* phi, double c_mart, double inv_h, const SolverConfig& config,
                   double& log_s) {
    double mean[2];
    double cov[4];
    auto objective = [&](const double* p, double ls) { return (p[0] * p[0] + p[1] * p[1]) / (4.0 * c_mart) + ls; };
    log_s = eval_row(row, phi, 2, inv_h, mean, cov);
    double value = objective(phi, log_s);
    for (int it = 0; it < config.newton_max_iter; ++it) {
        const double g0 = phi[0] / (2.0 * c_mart) + mean[0] * inv_h;
        const double g1 = phi[1] / (2.0 * c_mart) + mean[1] * inv_h;
        if (std::max(std::abs(g0), std::abs(g1)) <= config.newton_tol)
            return;
        const double h00 = 1.0 / (2.0 * c_mart) + cov[0] * inv_h * inv_h;
        const double h01 = cov[1] * inv_h * inv_h;
        const double h11 = 1.0 / (2.0 * c_mart) + cov[3] * inv_h * inv_h;
        const double det = h00 * h11 - h01 * h01;
        const double d0 = -(h11 * g0 - h01 * g1) / det;
        const double d1 = -(-h01 * g0 + h00 * g1) / det;
        const double slope = g0 * d0 + g1 * d1;
        if (!(slope < 0.0))
            return;
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            double trial[2] = {phi[0] + t * d0, phi[1] + t * d1};
            double tm[2];
            double tc[4];
            const double tls = eval_row(row, trial, 2, inv_h, tm, tc);
            const double tv = objective(trial, tls);
            if (tv <= value + 1e-4 * t * slope) {
                phi[0] = trial[0];
                phi[1] = trial[1];
                log_s = tls;
                value = tv;
                std::copy(tm, tm + 2, mean);
                std::copy(tc, tc + 4, cov);
                moved = true;
                break;
            }
        }
        if (!moved)
            return;
    }
}

double normalised_log_mass(const std::vector<double>& log_marginal, std::vector<double>& weights) {
    double m = kNegInf;
    for (double v : log_marginal)
        m = std::max(m, v);
    weights.resize(log_marginal.size());
    double s = 0.0;
    for (std::size_t i = 0; i < log_marginal.size(); ++i) {
        weights[i] = m == kNegInf ? 0.0 : std::exp(log_marginal[i] - m);
        s += weights[i];
    }
    if (s > 0.0)
        for (double& w : weights)
            w /= s;
    return m == kNegInf ? kNegInf : m + std::log(s);
}

void recompute_down(const ChainProblem& problem, SolverState& state) {
    const int n = problem.n_steps();
    state.mart_mean.resize(n);
    for (int k = n; k >= 1; --k)
        update_psi_down(problem, state.potentials, state.cache, k, &state.mart_mean[k - 1]);
}

} // namespace

void SolverConfig::validate() const {
    if (!(epsilon > 0.0))
        throw InvalidArgument("solver: epsilon must be positive");
    if (max_sweeps < 1 || newton_max_iter < 1)
        throw InvalidArgument("solver: max_sweeps and newton_max_iter must be >= 1");
    if (!(newton_tol > 0.0))
        throw InvalidArgument("solver: newton_tol must be positive");
    if (!(c_mart >= 0.0) || !std::isfinite(c_mart))
        throw InvalidArgument("solver: c_mart must be finite and >= 0");
    if (!(w_price > 0.0))
        throw InvalidArgument("solver: w_price must be positive");
    if (anderson_depth < 1)
        throw InvalidArgument("solver: anderson_depth must be >= 1");
}

SolverState SolverState::start(const ChainProblem& problem) {
    return start(problem, DualPotentials::zeros(problem));
}

SolverState SolverState::start(const ChainProblem& problem, DualPotentials initial) {
    SolverState s;
    s.potentials = std::move(initial);
    s.cache = MessageCache::init(problem);
    s.mart_mean.assign(problem.n_steps(), {});
    return s;
}

// ---------------------------------------------------------------------------

void solve_marginal_block(const ChainProblem& problem, SolverState& state, const SolverConfig& config, int k) {
    auto& pot = state.potentials;
    const int n = problem.n_steps();
    auto& phi = pot.phi_nu[k];
    if (k == 0) {
        const auto& nu0 = problem.reference().nu0;
        std::vector<double> node = node_potential(problem, pot, 0);
        for (std::size_t i = 0; i < phi.size(); ++i) {
            if (nu0[i] <= 0.0)
                continue;
            const double lam_g = node[i] - phi[i];
            phi[i] = std::log(nu0[i]) - state.cache.psi_up[0][i] - state.cache.psi_down[0][i] - lam_g;
        }
    } else if (k < n) {
        const CostParams cost = config.cost();
        std::vector<double> neg(pot.dim);
        for (std::size_t i = 0; i < phi.size(); ++i) {
            auto p = pot.phi_m_at(k, i);
            for (int c = 0; c < pot.dim; ++c)
                neg[c] = -p[c];
            phi[i] = cost.f_star(neg);
        }
    } else {
        std::fill(phi.begin(), phi.end(), 0.0);
    }
    state.cache.invalidate_node(k);
}

void solve_price_block(const ChainProblem& problem, SolverState& state, const SolverConfig& config, int k) {
    const auto& cons = problem.constraints();
    const int m = cons.count(k);
    if (m == 0)
        return;
    auto& pot = state.potentials;
    const double h = problem.h();
    const double w = config.w_price;
    const std::size_t size = problem.grid_size(k);

    std::vector<double> log_a(size);
    for (std::size_t x = 0; x < size; ++x)
        log_a[x] = state.cache.psi_up[k][x] + pot.phi_nu[k][x] + state.cache.psi_down[k][x];
    std::vector<std::span<const double>> g(m);
    Eigen::VectorXd target(m);
    for (int j = 0; j < m; ++j) {
        g[j] = cons.payoff(k, j);
        target[j] = cons.instruments()[cons.at_step(k)[j]].target_price;
    }

    Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(pot.lambda[k].data(), m);
    std::vector<double> mass(size);

    // value, and optionally gradient/Hessian, of the concave block objective
    auto evaluate = [&](const Eigen::VectorXd& l, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
        double z = 0.0;
        for (std::size_t x = 0; x < size; ++x) {
            if (log_a[x] == kNegInf) {
                mass[x] = 0.0;
                continue;
            }
            double e = log_a[x];
            for (int j = 0; j < m; ++j)
                e += l[j] * g[j][x] / h;
            mass[x] = std::exp(e);
            z += mass[x];
        }
        double value = target.dot(l) - l.squaredNorm() / (2.0 * w) - h * z;
        if (grad) {
            *grad = target - l / w;
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (std::size_t x = 0; x < size; ++x)
                    s += g[j][x] * mass[x];
                (*grad)[j] -= s;
            }
        }
        if (hess) {
            hess->setZero(m, m);
            for (int i = 0; i < m; ++i)
                for (int j = i; j < m; ++j) {
                    double s = 0.0;
                    for (std::size_t x = 0; x < size; ++x)
                        s += g[i][x] * g[j][x] * mass[x];
                    (*hess)(i, j) = (*hess)(j, i) = -s / h;
                }
            hess->diagonal().array() -= 1.0 / w;
        }
        return std::isfinite(value) ? value : kNegInf;
    };

    Eigen::VectorXd grad(m);
    Eigen::MatrixXd hess(m, m);
    double value = evaluate(lam, &grad, &hess);
    if (!std::isfinite(value))
        throw NonFiniteMessage("price block: non-finite objective at step " + std::to_string(k));
    bool converged = false;
    for (int it = 0; it < config.newton_max_iter; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() <= config.newton_tol) {
            converged = true;
            break;
        }
        const Eigen::VectorXd dir = (-hess).ldlt().solve(grad);
        const double slope = grad.dot(dir);
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const Eigen::VectorXd trial = lam + t * dir;
            const double tv = evaluate(trial, nullptr, nullptr);
            if (tv >= value + 1e-4 * t * slope) {
                lam = trial;
                moved = true;
                break;
            }
        }
        if (!moved) {
            // no representable ascent left: the gradient is at its rounding floor
            converged = true;
            break;
        }
        value = evaluate(lam, &grad, &hess);
    }
    if (!converged && grad.lpNorm<Eigen::Infinity>() > std::sqrt(config.newton_tol))
        throw NewtonDiverged("price block at step " + std::to_string(k) + " did not converge");
    for (int j = 0; j < m; ++j)
        pot.lambda[k][j] = lam[j];
    state.cache.invalidate_node(k);
}

void solve_driftvol_block(const ChainProblem& problem, SolverState& state, const SolverConfig& config, int k) {
    auto& pot = state.potentials;
    auto& cache = state.cache;
    if (config.c_mart == 0.0) {
        // F* is the indicator of {0}: phi_m stays at zero
        std::fill(pot.phi_m[k].begin(), pot.phi_m[k].end(), 0.0);
        cache.invalidate(k);
        update_psi_down(problem, pot, cache, k + 1);
        solve_marginal_block(problem, state, config, k);
        return;
    }
    const auto& ker = problem.reference().kernels[k];
    const int dim = pot.dim;
    const double inv_h = 1.0 / problem.h();
    const double c = config.c_mart;
    const CostParams cost = config.cost();

    std::vector<double> d = node_potential(problem, pot, k + 1);
    for (std::size_t j = 0; j < d.size(); ++j)
        d[j] += cache.psi_down[k + 1][j];
    const std::vector<double> node = node_potential(problem, pot, k);
    const auto& nu0 = problem.reference().nu0;
    auto& psi_down = cache.psi_down[k];
    const int rows = static_cast<int>(ker.rows());

#pragma omp parallel
    {
        PointRow row;
        double mean[2];
        double cov[4];
        std::vector<double> neg(dim);
#pragma omp for schedule(dynamic, 32)
        for (int i = 0; i < rows; ++i) {
            double* phi = pot.phi_m[k].data() + static_cast<std::size_t>(i) * dim;
            load_row(problem, ker, d, i, row);
            double log_s = eval_row(row, phi, dim, inv_h, mean, cov);
            const double up = cache.psi_up[k][i];
            if (up == kNegInf || up + node[i] + log_s < kLogTiny) {
                psi_down[i] = log_s;
                continue;
            }
            if (dim == 1)
                phi[0] = minimise_scalar(row, phi[0], c, inv_h, config, log_s);
            else
                minimise_pair(row, phi, c, inv_h, config, log_s);
            psi_down[i] = log_s;
            if (k == 0) {
                if (nu0[i] > 0.0) {
                    const double lam_g = node[i] - pot.phi_nu[0][i];
                    pot.phi_nu[0][i] = std::log(nu0[i]) - up - log_s - lam_g;
                }
            } else {
                for (int q = 0; q < dim; ++q)
                    neg[q] = -phi[q];
                pot.phi_nu[k][i] = cost.f_star(neg);
            }
        }
    }
    for (double v : psi_down)
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw NonFiniteMessage("drift/vol block produced a non-finite message at step " + std::to_string(k));
    cache.invalidate(k);
    cache.down_dirty[k] = 0;
}

std::vector<double> driftvol_gradient(const ChainProblem& problem, const SolverState& state,
                                      const SolverConfig& config, int k) {
    const auto& pot = state.potentials;
    const auto& ker = problem.reference().kernels[k];
    const int dim = pot.dim;
    const double inv_h = 1.0 / problem.h();
    std::vector<double> d = node_potential(problem, pot, k + 1);
    for (std::size_t j = 0; j < d.size(); ++j)
        d[j] += state.cache.psi_down[k + 1][j];
    std::vector<double> out(ker.rows() * dim);
    PointRow row;
    double mean[2];
    double cov[4];
    for (std::size_t i = 0; i < ker.rows(); ++i) {
        load_row(problem, ker, d, i, row);
        const double* phi = pot.phi_m[k].data() + i * dim;
        eval_row(row, phi, dim, inv_h, mean, cov);
        for (int q = 0; q < dim; ++q) {
            const double pen = config.c_mart > 0.0 ? phi[q] / (2.0 * config.c_mart) : 0.0;
            out[i * dim + q] = pen + mean[q] * inv_h;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> flatten(const DualPotentials& pot, bool eliminate_phi_nu) {
    std::vector<double> out;
    auto append = [&](const std::vector<double>& v) { out.insert(out.end(), v.begin(), v.end()); };
    if (eliminate_phi_nu)
        append(pot.phi_nu.front());
    else
        for (const auto& v : pot.phi_nu)
            append(v);
    for (const auto& v : pot.phi_m)
        append(v);
    for (const auto& v : pot.lambda)
        append(v);
    return out;
}

void unflatten(std::span<const double> flat, DualPotentials& pot, bool eliminate_phi_nu) {
    std::size_t pos = 0;
    auto take = [&](std::vector<double>& v) {
        if (pos + v.size() > flat.size())
            throw GridMismatch("unflatten: vector too short");
        std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
        pos += v.size();
    };
    if (eliminate_phi_nu)
        take(pot.phi_nu.front());
    else
        for (auto& v : pot.phi_nu)
            take(v);
    for (auto& v : pot.phi_m)
        take(v);
    for (auto& v : pot.lambda)
        take(v);
    if (pos != flat.size())
        throw GridMismatch("unflatten: vector too long");
}

void saturate_phi_nu(DualPotentials& pot, const CostParams& cost) {
    const int n = static_cast<int>(pot.phi_m.size());
    std::vector<double> neg(pot.dim);
    for (int k = 1; k < n; ++k)
        for (std::size_t i = 0; i < pot.phi_nu[k].size(); ++i) {
            auto p = pot.phi_m_at(k, i);
            for (int c = 0; c < pot.dim; ++c)
                neg[c] = -p[c];
            pot.phi_nu[k][i] = cost.f_star(neg);
        }
    std::fill(pot.phi_nu[n].begin(), pot.phi_nu[n].end(), 0.0);
}

void refresh_state(const ChainProblem& problem, SolverState& state) {
    refresh_up(problem, state.potentials, state.cache);
    recompute_down(problem, state);
}

std::vector<double> model_prices(const ChainProblem& problem, const SolverState& state) {
    const auto& cons = problem.constraints();
    std::vector<double> prices(cons.instruments().size(), 0.0);
    std::vector<double> weights;
    for (int k = 0; k <= problem.n_steps(); ++k) {
        if (cons.count(k) == 0)
            continue;
        normalised_log_mass(log_marginal(problem, state.potentials, state.cache, k), weights);
        for (int j = 0; j < cons.count(k); ++j) {
            const auto g = cons.payoff(k, j);
            double s = 0.0;
            for (std::size_t x = 0; x < weights.size(); ++x)
                s += g[x] * weights[x];
            prices[cons.at_step(k)[j]] = s;
        }
    }
    return prices;
}

double price_error_l2(const ChainProblem& problem, std::span<const double> prices) {
    const auto& ins = problem.constraints().instruments();
    double s = 0.0;
    for (std::size_t i = 0; i < ins.size(); ++i) {
        const double e = prices[i] - ins[i].target_price;
        s += e * e;
    }
    return std::sqrt(s);
}

double martingale_error_l2(const ChainProblem& problem, const SolverState& state) {
    const double h = problem.h();
    std::vector<double> weights;
    double s = 0.0;
    for (int k = 0; k < problem.n_steps(); ++k) {
        normalised_log_mass(log_marginal(problem, state.potentials, state.cache, k), weights);
        const auto& b = state.mart_mean[k];
        for (std::size_t x = 0; x < weights.size(); ++x) {
            const double bk = b[x] / h;
            s += weights[x] * bk * bk;
        }
    }
    return std::sqrt(h * s);
}

namespace {

void fill_report(const ChainProblem& problem, const SolverState& state, const SolverConfig& config,
                 SweepReport& report) {
    report.dual_value = dual_objective(problem, state.potentials, state.cache, config.cost());
    const auto prices = model_prices(problem, state);
    report.price_error_l2 = price_error_l2(problem, prices);
    report.martingale_error_l2 = martingale_error_l2(problem, state);
}

} // namespace

SweepReport sweep(const ChainProblem& problem, SolverState& state, const SolverConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = problem.n_steps();
    const std::vector<double> before = flatten(state.potentials, config.eliminate_phi_nu);

    refresh_up(problem, state.potentials, state.cache);
    refresh_down(problem, state.potentials, state.cache);
    for (int k = 0; k < n; ++k) {
        solve_marginal_block(problem, state, config, k);
        solve_price_block(problem, state, config, k);
        solve_driftvol_block(problem, state, config, k);
        update_psi_up(problem, state.potentials, state.cache, k);
    }
    solve_marginal_block(problem, state, config, n);
    solve_price_block(problem, state, config, n);
    recompute_down(problem, state);

    const std::vector<double> after = flatten(state.potentials, config.eliminate_phi_nu);
    double diff = 0.0;
    for (std::size_t i = 0; i < after.size(); ++i)
        diff = std::max(diff, std::abs(after[i] - before[i]));

    SweepReport report;
    report.e_max = diff / std::max(sup_norm(before), 1.0);
    fill_report(problem, state, config, report);
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

RunResult run(const ChainProblem& problem, const SolverConfig& config, const SweepCallback& on_sweep) {
    return run(problem, config, DualPotentials::zeros(problem), on_sweep);
}

RunResult run(const ChainProblem& problem, const SolverConfig& config, DualPotentials initial,
              const SweepCallback& on_sweep) {
    config.validate();
    const CostParams cost = config.cost();
    saturate_phi_nu(initial, cost);
    RunResult result;
    result.state = SolverState::start(problem, std::move(initial));
    refresh_state(problem, result.state);

    // An extrapolated point is judged by the objective of its sweep image against the
    // image of the last plain point; on a decrease the saved image is restored.
    // Interior phi_nu are functions of phi_m, so they stay out of the mixing.
    AndersonAccelerator anderson(config.anderson_depth);
    std::optional<SolverState> saved;
    SweepReport saved_report;
    for (int s = 1; s <= config.max_sweeps; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<double> x = flatten(result.state.potentials, true);
        SweepReport report;
        bool rejected = false;
        try {
            report = sweep(problem, result.state, config);
            rejected = saved && !(report.dual_value >= saved_report.dual_value);
        } catch (const NonFiniteMessage&) {
            if (!saved)
                throw;
            rejected = true;
        }
        if (rejected) {
            result.state = std::move(*saved);
            saved.reset();
            anderson.reset();
            report = saved_report;
        } else if (config.anderson_depth > 1 && report.e_max >= config.epsilon) {
            const std::vector<double> gx = flatten(result.state.potentials, true);
            const std::vector<double> next = anderson.step(x, gx);
            if (next != gx) {
                saved = result.state;
                saved_report = report;
                unflatten(next, result.state.potentials, true);
                saturate_phi_nu(result.state.potentials, cost);
                result.state.cache.invalidate_all();
                report.accelerated = true;
            } else {
                saved.reset();
            }
        }
        report.sweep_index = s;
        report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(report);
        if (on_sweep)
            on_sweep(report);
        if (!rejected && !report.accelerated && report.e_max < config.epsilon)
            return result;
    }
    if (saved)
        result.state = std::move(*saved);
    refresh_state(problem, result.state);
    result.max_sweeps_reached = true;
    return result;
}

} // namespace smot
