#pragma once

#include "smot/acceleration.hpp"
#include "smot/diagnostics.hpp"
#include "smot/market_model.hpp"
#include "smot/sinkhorn_solver.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace smot {

/// Full experiment configuration. Schedule entries count time points, so a
/// level with value n uses n - 1 timesteps on [0, horizon].
struct RunConfig {
    double spot = 100.0;
    double ref_vol = 0.2;
    double horizon = 1.0;
    std::vector<int> schedule{11, 21, 41, 81};
    double delta = 5.0;
    double k_pts = 50.0;
    double epsilon = 1e-6;
    int max_sweeps = 500;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
    double c_mart = 1e4;
    double w_price = 1.0;
    int anderson_depth = 5;
    RefineMode refine_mode = RefineMode::InterpolatePotentials;
    market::SsviParams ssvi;
    market::SyntheticMarketSpec market;
    std::string output_dir = "output";
    bool emit_plots = false;
    bool record_wall_time = true; // false writes 0 in wall_ms so reruns are byte-identical

    void validate() const;
    SolverConfig solver() const;
};

struct LevelSweep {
    int sweep = 0; // counted across levels, from 1
    int level = 0;
    int n_timesteps = 0; // time points of the level
    SweepReport report;
};

struct LevelSummary {
    int level = 0;
    int n_timesteps = 0;
    int first_sweep = 0;
    int last_sweep = 0;
    bool converged = false;
    double wall_ms = 0.0;
};

struct InstrumentResult {
    market::Instrument instrument;
    double model_price = 0.0;
    double market_iv = 0.0;
    double model_iv = 0.0; // NaN when the model price has no implied vol
};

struct CalibrationResult {
    std::shared_ptr<const ChainProblem> problem; // finest level
    SolverState state;
    Characteristics characteristics;
    std::vector<std::vector<double>> marginals; // normalised masses per timestep
    std::vector<InstrumentResult> instruments;
    std::vector<LevelSweep> history;
    std::vector<LevelSummary> levels;
    EntropyReport entropy;
    double price_error_l2 = 0.0;
    double martingale_error_l2 = 0.0;
    bool converged = false;

    double max_iv_error() const;
};

using ProgressCallback = std::function<void(const LevelSweep&)>;

/// Synthetic SSVI market, multiscale Sinkhorn calibration and diagnostics.
CalibrationResult run_calibration(const RunConfig& config, const ProgressCallback& progress = {});

/// Local volatility function read off a solved level, for rebuilding the
/// reference measure: piecewise constant in t, linear in x, masked points and
/// the ends fall back to `fallback`, values clamped to [fallback / 4, 4 fallback].
LocalFunction extracted_local_vol(const ChainProblem& problem, const Characteristics& chars, double fallback);

} // namespace smot
