#include "smot/calibration.hpp"

#include "smot/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace smot {

void RunConfig::validate() const {
    if (!(spot > 0.0) || !(ref_vol > 0.0) || !(horizon > 0.0))
        throw InvalidArgument("config: spot, ref_vol and horizon must be positive");
    if (schedule.empty())
        throw InvalidArgument("config: schedule must not be empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (schedule[i] < 2)
            throw InvalidArgument("config: schedule entries count time points and must be >= 2");
        if (i > 0 && schedule[i] <= schedule[i - 1])
            throw InvalidArgument("config: schedule must be increasing");
    }
    if (!(delta > 0.0) || !(k_pts >= 1.0))
        throw InvalidArgument("config: delta must be positive and K_pts >= 1");
    ssvi.validate();
    solver().validate();
    for (double t : market.maturities)
        if (!(t > 0.0) || t > horizon * (1.0 + 1e-12))
            throw InvalidArgument("config: maturities must lie in (0, horizon]");
    // every maturity must sit on every level's time grid
    for (int n : schedule)
        build_time_grid(horizon, n - 1, market.maturities);
}

SolverConfig RunConfig::solver() const {
    SolverConfig s;
    s.epsilon = epsilon;
    s.max_sweeps = max_sweeps;
    s.newton_tol = newton_tol;
    s.newton_max_iter = newton_max_iter;
    s.c_mart = c_mart;
    s.w_price = w_price;
    s.anderson_depth = anderson_depth;
    return s;
}

double CalibrationResult::max_iv_error() const {
    double m = 0.0;
    for (const auto& r : instruments) {
        const double e = std::abs(r.model_iv - r.market_iv);
        m = std::isnan(e) ? std::numeric_limits<double>::infinity() : std::max(m, e);
    }
    return m;
}

LocalFunction extracted_local_vol(const ChainProblem& problem, const Characteristics& chars, double fallback) {
    struct Slice {
        double x0 = 0.0;
        double dx = 0.0;
        std::vector<double> sigma;
    };
    std::vector<Slice> slices;
    const auto& grids = problem.reference().grids;
    for (int k = 0; k < problem.n_steps(); ++k) {
        Slice s;
        s.x0 = grids[k].x(0);
        s.dx = grids[k].dx;
        s.sigma.resize(grids[k].size());
        for (std::size_t i = 0; i < s.sigma.size(); ++i) {
            const double v = chars.masked[k][i] ? fallback : chars.local_vol[k][i];
            s.sigma[i] = std::clamp(v, 0.25 * fallback, 4.0 * fallback);
        }
        slices.push_back(std::move(s));
    }
    const double h = problem.h();
    return [slices = std::move(slices), h, fallback](double x, double t) {
        const int k = std::clamp(static_cast<int>(std::floor(t / h + 1e-9)), 0, static_cast<int>(slices.size()) - 1);
        const Slice& s = slices[k];
        const double u = (x - s.x0) / s.dx;
        if (u < 0.0 || u > static_cast<double>(s.sigma.size() - 1))
            return fallback;
        const auto lo = static_cast<std::size_t>(u);
        const std::size_t hi = std::min(lo + 1, s.sigma.size() - 1);
        const double a = u - static_cast<double>(lo);
        return (1.0 - a) * s.sigma[lo] + a * s.sigma[hi];
    };
}

CalibrationResult run_calibration(const RunConfig& config, const ProgressCallback& progress) {
    config.validate();
    const SolverConfig solver = config.solver();
    const auto instruments = market::generate_synthetic_instruments(config.ssvi, config.spot, config.market);

    CalibrationResult result;
    std::shared_ptr<const ChainProblem> previous;
    DualPotentials previous_pot;
    LocalFunction vol = constant_function(config.ref_vol);
    int sweep_count = 0;

    for (std::size_t level = 0; level < config.schedule.size(); ++level) {
        const auto t0 = std::chrono::steady_clock::now();
        const int points = config.schedule[level];
        ReferenceSpec spec;
        spec.horizon = config.horizon;
        spec.n_steps = points - 1;
        spec.maturities = config.market.maturities;
        spec.ref_vol = vol;
        spec.x0 = std::log(config.spot);
        spec.delta = config.delta;
        spec.k_pts = config.k_pts;
        auto problem = std::make_shared<const ChainProblem>(build_reference_measure(spec), instruments);

        DualPotentials init = DualPotentials::zeros(*problem);
        if (previous && config.refine_mode == RefineMode::InterpolatePotentials)
            init = interpolate_potentials(*previous, previous_pot, *problem, solver.cost());

        LevelSummary summary;
        summary.level = static_cast<int>(level);
        summary.n_timesteps = points;
        summary.first_sweep = sweep_count + 1;
        RunResult run_result = run(*problem, solver, std::move(init), [&](const SweepReport& r) {
            LevelSweep entry{++sweep_count, static_cast<int>(level), points, r};
            if (!config.record_wall_time)
                entry.report.wall_ms = 0.0;
            result.history.push_back(entry);
            if (progress)
                progress(entry);
        });
        summary.last_sweep = sweep_count;
        summary.converged = !run_result.max_sweeps_reached;
        summary.wall_ms = config.record_wall_time
                              ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()
                              : 0.0;
        result.levels.push_back(summary);

        result.state = std::move(run_result.state);
        result.converged = summary.converged;
        previous = problem;
        previous_pot = result.state.potentials;

        if (level + 1 < config.schedule.size() && config.refine_mode == RefineMode::RebuildReference) {
            const Characteristics chars =
                extract_characteristics(*problem, result.state.potentials, result.state.cache);
            vol = extracted_local_vol(*problem, chars, config.ref_vol);
        }
    }

    const ChainProblem& problem = *previous;
    result.problem = previous;
    const auto& pot = result.state.potentials;
    const auto& cache = result.state.cache;
    result.characteristics = extract_characteristics(problem, pot, cache);
    for (int k = 0; k <= problem.n_steps(); ++k) {
        std::vector<double> m = marginal_density(problem, pot, cache, k);
        double s = 0.0;
        for (double v : m)
            s += v;
        if (s > 0.0)
            for (double& v : m)
                v /= s;
        result.marginals.push_back(std::move(m));
    }
    const std::vector<double> prices = model_prices(problem, result.state);
    result.price_error_l2 = price_error_l2(problem, prices);
    result.martingale_error_l2 = martingale_error_l2(problem, result.state);
    result.entropy = specific_entropy(problem, pot, cache, result.characteristics);
    for (std::size_t i = 0; i < instruments.size(); ++i) {
        const auto& ins = instruments[i];
        InstrumentResult r;
        r.instrument = ins;
        r.model_price = prices[i];
        r.market_iv = market::ssvi_quote(config.ssvi, config.spot, ins.maturity, ins.strike, ins.kind).implied_vol;
        try {
            r.model_iv = market::implied_vol(config.spot, ins.strike, ins.maturity, prices[i], ins.kind);
        } catch (const PriceOutOfBounds&) {
            r.model_iv = std::numeric_limits<double>::quiet_NaN();
        }
        result.instruments.push_back(r);
    }
    return result;
}

} // namespace smot
