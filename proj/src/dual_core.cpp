#include "smot/dual_core.hpp"

#include "smot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace smot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_message(const std::vector<double>& msg, const char* what, int k) {
    for (double v : msg)
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw NonFiniteMessage(std::string(what) + " message at step " + std::to_string(k) +
                                   " is not finite");
}

double dot_stat(const double* phi, const double* b, int dim) {
    double s = phi[0] * b[0];
    for (int c = 1; c < dim; ++c)
        s += phi[c] * b[c];
    return s;
}

} // namespace

void StatisticB::evaluate(double dy, std::span<double> out) const {
    if (kind == StatisticKind::MartingaleExp) {
        out[0] = -std::expm1(dy);
    } else {
        out[0] = dy;
        out[1] = 0.5 * dy * dy;
    }
}

double delta_transition(std::span<const double> phi_m_at_x, const StatisticB& stat, double x, double y) {
    double b[2] = {0.0, 0.0};
    stat.evaluate(y - x, b);
    double s = 0.0;
    for (int c = 0; c < stat.dim(); ++c)
        s += phi_m_at_x[c] * b[c];
    return s;
}

double log_sum_exp(std::span<const double> v) {
    double m = kNegInf;
    for (double x : v)
        m = std::max(m, x);
    if (m == kNegInf)
        return kNegInf;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - m);
    return m + std::log(s);
}

// ---------------------------------------------------------------------------

PriceConstraints::PriceConstraints(const ReferenceMeasure& ref, std::vector<market::Instrument> instruments)
    : instruments_(std::move(instruments)) {
    const int n = ref.n_steps();
    by_step_.assign(n + 1, {});
    payoff_.assign(n + 1, {});
    grid_size_.resize(n + 1);
    for (int k = 0; k <= n; ++k)
        grid_size_[k] = ref.grids[k].size();
    step_of_.resize(instruments_.size());
    for (std::size_t i = 0; i < instruments_.size(); ++i) {
        const auto& ins = instruments_[i];
        if (!(ins.strike > 0.0))
            throw InvalidArgument("instrument strike must be positive");
        const int k = ref.time_grid.index_of(ins.maturity);
        step_of_[i] = k;
        by_step_[k].push_back(static_cast<int>(i));
    }
    for (int k = 0; k <= n; ++k) {
        const auto& grid = ref.grids[k];
        auto& table = payoff_[k];
        table.resize(by_step_[k].size() * grid.size());
        for (std::size_t j = 0; j < by_step_[k].size(); ++j) {
            const auto& ins = instruments_[by_step_[k][j]];
            for (std::size_t x = 0; x < grid.size(); ++x)
                table[j * grid.size() + x] = market::payoff(ins.kind, ins.strike, grid.x(x));
        }
    }
}

std::span<const double> PriceConstraints::payoff(int k, int j) const {
    return {payoff_[k].data() + static_cast<std::size_t>(j) * grid_size_[k], grid_size_[k]};
}

double CostParams::f_star(std::span<const double> p) const {
    double sq = 0.0;
    for (double v : p)
        sq += v * v;
    if (c_mart == 0.0)
        return sq == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return sq / (4.0 * c_mart);
}

ChainProblem::ChainProblem(ReferenceMeasure reference, std::vector<market::Instrument> instruments,
                           StatisticB statistic)
    : reference_(std::move(reference)), constraints_(reference_, std::move(instruments)),
      statistic_(statistic) {
    long lo = 0;
    long hi = 0;
    for (const auto& ker : reference_.kernels) {
        lo = std::min(lo, ker.min_offset());
        hi = std::max(hi, ker.max_offset());
    }
    min_offset_ = lo;
    const int d = statistic_.dim();
    stat_table_.resize((hi - lo + 1) * d);
    mart_table_.resize(hi - lo + 1);
    const double dx = reference_.dx();
    for (long o = lo; o <= hi; ++o) {
        const double dy = static_cast<double>(o) * dx;
        statistic_.evaluate(dy, {&stat_table_[(o - lo) * d], static_cast<std::size_t>(d)});
        mart_table_[o - lo] = -std::expm1(dy);
    }
}

// ---------------------------------------------------------------------------

DualPotentials DualPotentials::zeros(const ChainProblem& problem) {
    const int n = problem.n_steps();
    DualPotentials p;
    p.dim = problem.dim();
    p.phi_nu.resize(n + 1);
    p.phi_m.resize(n);
    p.lambda.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        p.phi_nu[k].assign(problem.grid_size(k), 0.0);
        p.lambda[k].assign(problem.constraints().count(k), 0.0);
        if (k < n)
            p.phi_m[k].assign(problem.grid_size(k) * p.dim, 0.0);
    }
    return p;
}

bool DualPotentials::all_finite() const {
    auto finite = [](const std::vector<std::vector<double>>& vv) {
        for (const auto& v : vv)
            for (double x : v)
                if (!std::isfinite(x))
                    return false;
        return true;
    };
    return finite(phi_nu) && finite(phi_m) && finite(lambda);
}

MessageCache MessageCache::init(const ChainProblem& problem) {
    const int n = problem.n_steps();
    MessageCache c;
    c.psi_up.resize(n + 1);
    c.psi_down.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        c.psi_up[k].assign(problem.grid_size(k), 0.0);
        c.psi_down[k].assign(problem.grid_size(k), 0.0);
    }
    const auto& nu0 = problem.reference().nu0;
    for (std::size_t i = 0; i < nu0.size(); ++i)
        c.psi_up[0][i] = nu0[i] > 0.0 ? std::log(nu0[i]) : kNegInf;
    c.up_dirty.assign(n + 1, 1);
    c.down_dirty.assign(n + 1, 1);
    c.up_dirty[0] = 0;
    c.down_dirty[n] = 0;
    return c;
}

void MessageCache::invalidate(int k) {
    const int n = static_cast<int>(psi_up.size()) - 1;
    for (int j = k + 1; j <= n; ++j)
        up_dirty[j] = 1;
    for (int j = 0; j <= std::min(k, n - 1); ++j)
        down_dirty[j] = 1;
}

void MessageCache::invalidate_node(int k) {
    const int n = static_cast<int>(psi_up.size()) - 1;
    for (int j = k + 1; j <= n; ++j)
        up_dirty[j] = 1;
    for (int j = 0; j < std::min(k, n); ++j)
        down_dirty[j] = 1;
}

void MessageCache::invalidate_all() {
    const int n = static_cast<int>(psi_up.size()) - 1;
    for (int j = 1; j <= n; ++j)
        up_dirty[j] = 1;
    for (int j = 0; j < n; ++j)
        down_dirty[j] = 1;
}

bool MessageCache::up_clean() const {
    return std::none_of(up_dirty.begin(), up_dirty.end(), [](char c) { return c != 0; });
}

bool MessageCache::down_clean() const {
    return std::none_of(down_dirty.begin(), down_dirty.end(), [](char c) { return c != 0; });
}

// ---------------------------------------------------------------------------

std::vector<double> node_potential(const ChainProblem& problem, const DualPotentials& pot, int k) {
    std::vector<double> out = pot.phi_nu[k];
    const auto& cons = problem.constraints();
    const double inv_h = 1.0 / problem.h();
    for (int j = 0; j < cons.count(k); ++j) {
        const double lam = pot.lambda[k][j] * inv_h;
        if (lam == 0.0)
            continue;
        const auto g = cons.payoff(k, j);
        for (std::size_t x = 0; x < out.size(); ++x)
            out[x] += lam * g[x];
    }
    return out;
}

void update_psi_up(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache, int k) {
    const auto& ker = problem.reference().kernels[k];
    std::vector<double> u = node_potential(problem, pot, k);
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] += cache.psi_up[k][i];

    const double inv_h = 1.0 / problem.h();
    const int dim = pot.dim;
    const double* phi = pot.phi_m[k].data();
    auto& out = cache.psi_up[k + 1];
    out.resize(ker.cols());
    const int cols = static_cast<int>(ker.cols());

#pragma omp parallel
    {
        std::vector<double> t;
#pragma omp for schedule(static)
        for (int j = 0; j < cols; ++j) {
            t.clear();
            double m = kNegInf;
            for (int i = ker.source_lo(j); i <= ker.source_hi(j); ++i) {
                const auto& r = ker.row(i);
                if (j < r.first || j >= r.first + r.count || u[i] == kNegInf)
                    continue;
                const long o = ker.offset(i, j);
                const double v =
                    u[i] + dot_stat(phi + i * dim, problem.stat_at(o), dim) * inv_h + ker.log_weight(i, j);
                t.push_back(v);
                m = std::max(m, v);
            }
            if (m == kNegInf) {
                out[j] = kNegInf;
                continue;
            }
            double s = 0.0;
            for (double v : t)
                s += std::exp(v - m);
            out[j] = m + std::log(s);
        }
    }
    check_message(out, "forward", k + 1);
    cache.up_dirty[k + 1] = 0;
}

void update_psi_down(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache, int k,
                     std::vector<double>* mart_mean) {
    const int src = k - 1;
    const auto& ker = problem.reference().kernels[src];
    std::vector<double> d = node_potential(problem, pot, k);
    for (std::size_t j = 0; j < d.size(); ++j)
        d[j] += cache.psi_down[k][j];

    const double inv_h = 1.0 / problem.h();
    const int dim = pot.dim;
    const double* phi = pot.phi_m[src].data();
    auto& out = cache.psi_down[src];
    const int rows = static_cast<int>(ker.rows());
    out.resize(rows);
    if (mart_mean)
        mart_mean->assign(rows, 0.0);

#pragma omp parallel
    {
        std::vector<double> t;
#pragma omp for schedule(static)
        for (int i = 0; i < rows; ++i) {
            const auto& r = ker.row(i);
            t.resize(r.count);
            double m = kNegInf;
            for (int c = 0; c < r.count; ++c) {
                const int j = r.first + c;
                const long o = ker.offset(i, j);
                const double v =
                    d[j] + dot_stat(phi + i * dim, problem.stat_at(o), dim) * inv_h + ker.log_weight(i, j);
                t[c] = v;
                m = std::max(m, v);
            }
            if (m == kNegInf) {
                out[i] = kNegInf;
                continue;
            }
            double s = 0.0;
            double sb = 0.0;
            if (mart_mean) {
                for (int c = 0; c < r.count; ++c) {
                    const double w = std::exp(t[c] - m);
                    s += w;
                    sb += w * problem.mart_at(ker.offset(i, r.first + c));
                }
                (*mart_mean)[i] = sb / s;
            } else {
                for (int c = 0; c < r.count; ++c)
                    s += std::exp(t[c] - m);
            }
            out[i] = m + std::log(s);
        }
    }
    check_message(out, "backward", src);
    cache.down_dirty[src] = 0;
}

void refresh_down(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache) {
    const int n = problem.n_steps();
    bool stale = false;
    for (int k = n - 1; k >= 0; --k) {
        stale = stale || cache.down_dirty[k];
        if (stale)
            update_psi_down(problem, pot, cache, k + 1);
    }
}

void refresh_up(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache) {
    const int n = problem.n_steps();
    bool stale = false;
    for (int k = 1; k <= n; ++k) {
        stale = stale || cache.up_dirty[k];
        if (stale)
            update_psi_up(problem, pot, cache, k - 1);
    }
}

void refresh_all(const ChainProblem& problem, const DualPotentials& pot, MessageCache& cache) {
    refresh_down(problem, pot, cache);
    refresh_up(problem, pot, cache);
}

std::vector<double> log_marginal(const ChainProblem& problem, const DualPotentials& pot,
                                 const MessageCache& cache, int k) {
    std::vector<double> out = node_potential(problem, pot, k);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += cache.psi_up[k][i] + cache.psi_down[k][i];
    return out;
}

std::vector<double> marginal_density(const ChainProblem& problem, const DualPotentials& pot,
                                     const MessageCache& cache, int k) {
    std::vector<double> out = log_marginal(problem, pot, cache, k);
    for (double& v : out)
        v = std::exp(v);
    return out;
}

double BandedMatrix::at(std::size_t i, int j) const {
    if (j < first[i] || j >= first[i] + count(i))
        return 0.0;
    return values[start[i] + (j - first[i])];
}

double BandedMatrix::row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t p = start[i]; p < start[i + 1]; ++p)
        s += values[p];
    return s;
}

BandedMatrix joint_density(const ChainProblem& problem, const DualPotentials& pot,
                           const MessageCache& cache, int k) {
    const auto& ker = problem.reference().kernels[k];
    std::vector<double> u = node_potential(problem, pot, k);
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] += cache.psi_up[k][i];
    std::vector<double> d = node_potential(problem, pot, k + 1);
    for (std::size_t j = 0; j < d.size(); ++j)
        d[j] += cache.psi_down[k + 1][j];

    const double inv_h = 1.0 / problem.h();
    const int dim = pot.dim;
    const double* phi = pot.phi_m[k].data();

    BandedMatrix out;
    out.first.resize(ker.rows());
    out.start.resize(ker.rows() + 1, 0);
    for (std::size_t i = 0; i < ker.rows(); ++i) {
        out.first[i] = ker.row(i).first;
        out.start[i + 1] = out.start[i] + ker.row(i).count;
    }
    out.values.resize(out.start.back());
    for (std::size_t i = 0; i < ker.rows(); ++i) {
        const auto& r = ker.row(i);
        for (int c = 0; c < r.count; ++c) {
            const int j = r.first + c;
            const long o = ker.offset(i, j);
            const double v = u[i] + dot_stat(phi + i * dim, problem.stat_at(o), dim) * inv_h +
                             ker.log_weight(i, j) + d[j];
            out.values[out.start[i] + c] = std::exp(v);
        }
    }
    return out;
}

double log_path_mass(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache) {
    const int n = problem.n_steps();
    if (cache.up_clean()) {
        std::vector<double> v = node_potential(problem, pot, n);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] += cache.psi_up[n][i];
        return log_sum_exp(v);
    }
    if (!cache.down_clean())
        throw InvalidArgument("log_path_mass: messages are stale");
    std::vector<double> v = node_potential(problem, pot, 0);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] += cache.psi_up[0][i] + cache.psi_down[0][i];
    return log_sum_exp(v);
}

double dual_objective(const ChainProblem& problem, const DualPotentials& pot, const MessageCache& cache,
                      const CostParams& cost) {
    const int n = problem.n_steps();
    const double h = problem.h();
    const auto& nu0 = problem.reference().nu0;
    const int dim = pot.dim;
    std::vector<double> neg(dim);

    auto f_star_neg = [&](int k, std::size_t i) {
        auto p = pot.phi_m_at(k, i);
        for (int c = 0; c < dim; ++c)
            neg[c] = -p[c];
        return cost.f_star(neg);
    };

    double value = 0.0;
    for (std::size_t i = 0; i < nu0.size(); ++i) {
        if (nu0[i] <= 0.0)
            continue;
        const double fs = n > 0 ? f_star_neg(0, i) : 0.0;
        if (!std::isfinite(fs))
            return kNegInf;
        value += h * nu0[i] * (pot.phi_nu[0][i] - fs);
    }

    for (int k = 1; k <= n; ++k) {
        for (std::size_t i = 0; i < pot.phi_nu[k].size(); ++i) {
            const double bound = k < n ? f_star_neg(k, i) : 0.0;
            if (pot.phi_nu[k][i] < bound - 1e-12 * (1.0 + std::abs(bound)))
                return kNegInf;
        }
    }

    const auto& cons = problem.constraints();
    for (int k = 0; k <= n; ++k) {
        for (int j = 0; j < cons.count(k); ++j) {
            const double lam = pot.lambda[k][j];
            const double target = cons.instruments()[cons.at_step(k)[j]].target_price;
            value += lam * target - lam * lam / (2.0 * cost.w_price);
        }
    }

    const double log_mass = log_path_mass(problem, pot, cache);
    value -= h * std::exp(log_mass);
    if (std::isnan(value))
        throw NonFiniteMessage("dual_objective: NaN");
    return value;
}

} // namespace smot
