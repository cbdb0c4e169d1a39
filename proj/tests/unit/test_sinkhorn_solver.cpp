#include "fixtures.hpp"

#include "smot/errors.hpp"
#include "smot/sinkhorn_solver.hpp"

#include <boost/math/tools/minima.hpp>
#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <random>

using namespace smot;

namespace {

ChainProblem random_problem(std::mt19937_64& rng, int n, StatisticKind kind = StatisticKind::MartingaleExp) {
    auto ins = fixtures::small_instruments(n, rng);
    return ChainProblem(fixtures::small_reference(n, 2.5, 1.5, 0.2, 0.0, fixtures::maturities_of(ins)), ins,
                        StatisticB{kind});
}

double objective(const ChainProblem& problem, SolverState& state, const SolverConfig& config) {
    refresh_state(problem, state);
    return dual_objective(problem, state.potentials, state.cache, config.cost());
}

bool ascends(double before, double after) {
    return after >= before - 1e-9 * std::max(1.0, std::abs(before));
}

// Maximiser of f on [lo, hi] by Brent's method on -f.
template <class F>
double argmax(F f, double lo, double hi) {
    const auto r = boost::math::tools::brent_find_minima([&](double v) { return -f(v); }, lo, hi, 40);
    return r.first;
}

} // namespace

TEST_CASE("every block update ascends the dual") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial % 3;
        const auto kind = trial % 2 ? StatisticKind::DriftVolPair : StatisticKind::MartingaleExp;
        const ChainProblem problem = random_problem(rng, n, kind);
        SolverConfig config;
        config.c_mart = trial % 3 == 0 ? 10.0 : 1e4;
        config.w_price = 1.0 + trial;
        SolverState state = SolverState::start(problem, fixtures::random_potentials(problem, config.cost(), rng));
        double value = objective(problem, state, config);
        REQUIRE(std::isfinite(value));
        for (int pass = 0; pass < 2; ++pass)
            for (int k = 0; k <= n; ++k) {
                solve_marginal_block(problem, state, config, k);
                double next = objective(problem, state, config);
                CHECK(ascends(value, next));
                value = next;
                solve_price_block(problem, state, config, k);
                next = objective(problem, state, config);
                CHECK(ascends(value, next));
                value = next;
                if (k < n) {
                    solve_driftvol_block(problem, state, config, k);
                    next = objective(problem, state, config);
                    CHECK(ascends(value, next));
                    value = next;
                }
            }
    }
}

TEST_CASE("sweeps ascend the dual") {
    std::mt19937_64 rng(37);
    const ChainProblem problem = random_problem(rng, 4);
    SolverConfig config;
    config.anderson_depth = 1;
    SolverState state = SolverState::start(problem, fixtures::random_potentials(problem, config.cost(), rng));
    double value = objective(problem, state, config);
    for (int s = 0; s < 20; ++s) {
        const SweepReport r = sweep(problem, state, config);
        CHECK(ascends(value, r.dual_value));
        CHECK(r.dual_value == doctest::Approx(dual_objective(problem, state.potentials, state.cache, config.cost())));
        value = r.dual_value;
    }
}

TEST_CASE("initial marginal block reproduces the initial law") {
    std::mt19937_64 rng(41);
    auto ins = fixtures::small_instruments(3, rng);
    const ChainProblem problem(fixtures::small_reference(3, 2.5, 1.5, 0.2, 0.05), ins);
    SolverConfig config;
    SolverState state = SolverState::start(problem, fixtures::random_potentials(problem, config.cost(), rng));
    refresh_state(problem, state);
    solve_marginal_block(problem, state, config, 0);
    refresh_state(problem, state);
    const auto m = marginal_density(problem, state.potentials, state.cache, 0);
    const auto& nu0 = problem.reference().nu0;
    for (std::size_t i = 0; i < m.size(); ++i)
        CHECK(std::abs(m[i] - nu0[i]) < 1e-13);
}

TEST_CASE("interior marginal block saturates its constraint") {
    std::mt19937_64 rng(43);
    const ChainProblem problem = random_problem(rng, 4);
    SolverConfig config;
    config.c_mart = 3.0;
    SolverState state = SolverState::start(problem, fixtures::random_potentials(problem, config.cost(), rng));
    refresh_state(problem, state);
    for (int k = 1; k <= 4; ++k) {
        solve_marginal_block(problem, state, config, k);
        for (std::size_t i = 0; i < state.potentials.phi_nu[k].size(); ++i) {
            const double p = k < 4 ? state.potentials.phi_m[k][i] : 0.0;
            CHECK(state.potentials.phi_nu[k][i] == doctest::Approx(p * p / 12.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("price block matches a one-dimensional line search") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 4; ++trial) {
        std::uniform_real_distribution<double> strike(0.92, 1.08);
        std::vector<market::Instrument> ins{{1.0, strike(rng), market::OptionKind::Call, 0.05}};
        const ChainProblem problem(fixtures::small_reference(3, 2.5, 1.5, 0.2, 0.0, {1.0}), ins);
        SolverConfig config;
        config.w_price = 2.0;
        SolverState state = SolverState::start(problem, fixtures::random_potentials(problem, config.cost(), rng));
        refresh_state(problem, state);
        SolverState probe = state;
        const double best = argmax(
            [&](double lam) {
                probe.potentials.lambda[3][0] = lam;
                probe.cache.invalidate_node(3);
                return objective(problem, probe, config);
            },
            -5.0, 5.0);
        solve_price_block(problem, state, config, 3);
        CHECK(state.potentials.lambda[3][0] == doctest::Approx(best).epsilon(1e-6));
    }
}

TEST_CASE("drift/vol block matches a pointwise line search") {
    std::mt19937_64 rng(53);
    const ChainProblem problem = random_problem(rng, 3);
    SolverConfig config;
    config.c_mart = 0.05;
    SolverState state = SolverState::start(problem, fixtures::random_potentials(problem, config.cost(), rng));
    saturate_phi_nu(state.potentials, config.cost());
    refresh_state(problem, state);
    const int k = 1;
    SolverState block = state;
    solve_driftvol_block(problem, block, config, k);
    const auto lm = log_marginal(problem, state.potentials, state.cache, k);
    int checked = 0;
    for (std::size_t i = 0; i < problem.grid_size(k); ++i) {
        if (!(lm[i] > -20.0))
            continue; // the dual is flat in phi_m where the chain carries no mass
        ++checked;
        SolverState probe = state;
        const double best = argmax(
            [&](double phi) {
                probe.potentials.phi_m[k][i] = phi;
                probe.potentials.phi_nu[k][i] = phi * phi / (4.0 * config.c_mart);
                probe.cache.invalidate_all();
                return objective(problem, probe, config);
            },
            -3.0, 3.0);
        CHECK(block.potentials.phi_m[k][i] == doctest::Approx(best).epsilon(1e-5));
    }
    CHECK(checked >= 3);
}

TEST_CASE("martingale reference is stationary for the drift/vol block") {
    ReferenceSpec spec;
    spec.n_steps = 10;
    spec.k_pts = 10.0;
    spec.delta = 8.0;
    const ChainProblem problem(build_reference_measure(spec), {});
    SolverConfig config;
    SolverState state = SolverState::start(problem);
    refresh_state(problem, state);
    const double reach = spec.delta * 0.2 * std::sqrt(problem.h());
    for (int k = 0; k < problem.n_steps(); ++k) {
        const auto g = driftvol_gradient(problem, state, config, k);
        const auto& ker = problem.reference().kernels[k];
        for (std::size_t i = 0; i < ker.rows(); ++i) {
            const auto& r = ker.row(i);
            const double lo = static_cast<double>(ker.offset(i, r.first)) * ker.dx() - r.mean;
            const double hi = static_cast<double>(ker.offset(i, r.first + r.count - 1)) * ker.dx() - r.mean;
            if (lo > -reach + ker.dx() || hi < reach - ker.dx())
                continue; // band clipped by the grid
            CHECK(std::abs(g[i]) <= 1e-6);
        }
    }
}

TEST_CASE("unconstrained problem converges to the reference at once") {
    const ChainProblem problem(fixtures::small_reference(4), {});
    SolverConfig config;
    config.c_mart = 0.0;
    const RunResult r = run(problem, config);
    REQUIRE(r.history.size() <= 2);
    CHECK_FALSE(r.max_sweeps_reached);
    CHECK(r.history.back().e_max <= 1e-12);
    CHECK(std::abs(log_path_mass(problem, r.state.potentials, r.state.cache)) < 1e-12);
}

TEST_CASE("history respects the sweep budget") {
    std::mt19937_64 rng(59);
    const ChainProblem problem = random_problem(rng, 4);
    SolverConfig config;
    config.max_sweeps = 3;
    config.epsilon = 1e-14;
    const RunResult r = run(problem, config);
    CHECK(r.history.size() == 3);
    CHECK(r.max_sweeps_reached);
    for (std::size_t i = 0; i < r.history.size(); ++i)
        CHECK(r.history[i].sweep_index == static_cast<int>(i) + 1);
}

TEST_CASE("converged potentials are a fixed point of every block") {
    std::mt19937_64 rng(61);
    const ChainProblem problem = random_problem(rng, 3);
    SolverConfig config;
    config.c_mart = 10.0;
    config.epsilon = 1e-11;
    config.max_sweeps = 3000;
    RunResult r = run(problem, config);
    REQUIRE_FALSE(r.max_sweeps_reached);
    for (int k = 0; k <= 3; ++k) {
        SolverState s = r.state;
        refresh_state(problem, s);
        const auto before = flatten(s.potentials, false);
        solve_marginal_block(problem, s, config, k);
        solve_price_block(problem, s, config, k);
        if (k < 3) {
            refresh_state(problem, s);
            solve_driftvol_block(problem, s, config, k);
        }
        const auto after = flatten(s.potentials, false);
        double d = 0.0;
        for (std::size_t i = 0; i < after.size(); ++i)
            d = std::max(d, std::abs(after[i] - before[i]));
        CHECK(d < 1e-8);
    }
}

TEST_CASE("explicit and eliminated interior potentials agree at the optimum") {
    std::mt19937_64 rng(67);
    const ChainProblem problem = random_problem(rng, 3);
    SolverConfig a;
    a.c_mart = 10.0;
    a.epsilon = 1e-10;
    a.max_sweeps = 3000;
    SolverConfig b = a;
    b.eliminate_phi_nu = true;
    const RunResult ra = run(problem, a);
    const RunResult rb = run(problem, b);
    const auto pa = model_prices(problem, ra.state);
    const auto pb = model_prices(problem, rb.state);
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::abs(pa[i] - pb[i]) < 1e-8);
    CHECK(ra.history.back().dual_value == doctest::Approx(rb.history.back().dual_value).epsilon(1e-10));
}

TEST_CASE("accelerated runs keep the reported dual non-decreasing") {
    std::mt19937_64 rng(71);
    const ChainProblem problem = random_problem(rng, 4);
    SolverConfig config;
    config.max_sweeps = 80;
    const RunResult r = run(problem, config);
    for (std::size_t i = 1; i < r.history.size(); ++i)
        CHECK(ascends(r.history[i - 1].dual_value, r.history[i].dual_value));
    CHECK(r.state.potentials.all_finite());
}

TEST_CASE("parallel and serial sweeps agree") {
#ifdef _OPENMP
    std::mt19937_64 rng(73);
    ReferenceSpec spec;
    spec.n_steps = 5;
    spec.k_pts = 6.0;
    spec.maturities = {1.0};
    std::vector<market::Instrument> ins{{1.0, std::exp(0.05), market::OptionKind::Call, 0.06}};
    const ChainProblem problem(build_reference_measure(spec), ins);
    SolverConfig config;
    config.anderson_depth = 1;
    config.max_sweeps = 5;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const RunResult serial = run(problem, config);
    omp_set_num_threads(4);
    const RunResult parallel = run(problem, config);
    omp_set_num_threads(saved);
    const auto a = flatten(serial.state.potentials, false);
    const auto b = flatten(parallel.state.potentials, false);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(a[i] - b[i]) <= 1e-12 * std::max(1.0, std::abs(a[i])));
#endif
}

TEST_CASE("flatten round trip") {
    std::mt19937_64 rng(79);
    const ChainProblem problem = random_problem(rng, 3);
    DualPotentials pot = fixtures::random_potentials(problem, CostParams{}, rng);
    for (bool elim : {false, true}) {
        const auto flat = flatten(pot, elim);
        DualPotentials copy = DualPotentials::zeros(problem);
        unflatten(flat, copy, elim);
        CHECK(flatten(copy, elim) == flat);
        std::vector<double> longer = flat;
        longer.push_back(0.0);
        CHECK_THROWS_AS(unflatten(longer, copy, elim), GridMismatch);
    }
    CHECK(flatten(pot, true).size() < flatten(pot, false).size());
}

TEST_CASE("solver configuration is validated") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    c.epsilon = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.w_price = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.anderson_depth = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.c_mart = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("price block reports an exhausted Newton budget") {
    std::mt19937_64 rng(83);
    const ChainProblem problem = random_problem(rng, 3);
    SolverConfig config;
    config.newton_max_iter = 1;
    config.newton_tol = 1e-30;
    SolverState state = SolverState::start(problem);
    refresh_state(problem, state);
    CHECK_THROWS_AS(solve_price_block(problem, state, config, 3), NewtonDiverged);
}

TEST_CASE("model prices and errors") {
    std::vector<market::Instrument> ins{{1.0, 1.0, market::OptionKind::Call, 0.0}};
    ReferenceSpec spec;
    spec.n_steps = 4;
    spec.k_pts = 20.0;
    spec.delta = 8.0;
    spec.maturities = {1.0};
    const ChainProblem problem(build_reference_measure(spec), ins);
    SolverState state = SolverState::start(problem);
    refresh_state(problem, state);
    const auto prices = model_prices(problem, state);
    // the reference chain is lognormal with total variance 0.04
    CHECK(prices[0] == doctest::Approx(market::black_scholes_price(1.0, 1.0, 0.04, market::OptionKind::Call)).epsilon(1e-4));
    CHECK(price_error_l2(problem, prices) == doctest::Approx(prices[0]));
    CHECK(martingale_error_l2(problem, state) < 1e-8);
}
