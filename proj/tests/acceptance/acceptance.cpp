// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "fixtures.hpp"
#include "reference_oracle.hpp"

#include "smot/calibration.hpp"
#include "smot/diagnostics.hpp"
#include "smot/errors.hpp"
#include "smot/market_model.hpp"
#include "smot/sinkhorn_solver.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace smot;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %s  %s  (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared random small instances

struct SmallInstance {
    ChainProblem problem;
    DualPotentials pot;
    SolverConfig config;
};

std::vector<SmallInstance> small_instances(int count) {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> steps(2, 4);
    std::uniform_real_distribution<double> delta(2.0, 3.0);
    std::uniform_real_distribution<double> kpts(1.0, 2.0);
    std::uniform_real_distribution<double> vol(0.15, 0.3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SmallInstance> out;
    while (static_cast<int>(out.size()) < count) {
        const int n = steps(rng);
        auto ins = fixtures::small_instruments(n, rng);
        const double v0 = unit(rng) < 0.5 ? 0.0 : 0.03;
        auto ref = fixtures::small_reference(n, delta(rng), kpts(rng), vol(rng), v0, fixtures::maturities_of(ins));
        std::size_t largest = 0;
        for (const auto& g : ref.grids)
            largest = std::max(largest, g.size());
        if (largest > 25)
            continue;
        const auto kind = unit(rng) < 0.5 ? StatisticKind::MartingaleExp : StatisticKind::DriftVolPair;
        ChainProblem problem(std::move(ref), ins, StatisticB{kind});
        SolverConfig config;
        config.c_mart = unit(rng) < 0.5 ? 10.0 : 1e4;
        config.w_price = 1.0 + 9.0 * unit(rng);
        config.anderson_depth = 1;
        DualPotentials pot = fixtures::random_potentials(problem, config.cost(), rng);
        out.push_back({std::move(problem), std::move(pot), config});
    }
    return out;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence(const std::vector<SmallInstance>& instances) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const auto& in : instances) {
        const auto& problem = in.problem;
        MessageCache cache = MessageCache::init(problem);
        refresh_all(problem, in.pot, cache);
        const auto dense = oracle::dense_tensor(problem, in.pot);
        const int n = problem.n_steps();
        auto track = [&](double a, double b) { worst = std::max(worst, fixtures::rel_err(a, b)); };
        track(std::exp(log_path_mass(problem, in.pot, cache)), oracle::oracle_path_mass(dense));
        for (int k = 0; k <= n; ++k) {
            const auto m = marginal_density(problem, in.pot, cache, k);
            const auto o = oracle::oracle_marginal(dense, k);
            for (std::size_t i = 0; i < m.size(); ++i)
                track(m[i], o[i]);
        }
        for (int k = 0; k < n; ++k) {
            const auto joint = joint_density(problem, in.pot, cache, k);
            const auto o = oracle::oracle_joint(dense, k);
            for (std::size_t i = 0; i < o.size(); ++i)
                for (std::size_t j = 0; j < o[i].size(); ++j)
                    track(joint.at(i, static_cast<int>(j)), o[i][j]);
        }
        track(dual_objective(problem, in.pot, cache, in.config.cost()),
              oracle::oracle_objective(problem, dense, in.pot, in.config.cost()));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-10 && secs <= 30.0,
            std::to_string(instances.size()) + " instances, max rel err " + fmt("%.2e", worst) + ", " +
                fmt("%.1f s", secs)};
}

Outcome dual_ascent(const std::vector<SmallInstance>& instances) {
    double worst = 0.0; // largest relative decrease
    int steps = 0;
    for (const auto& in : instances) {
        const auto& problem = in.problem;
        const auto& config = in.config;
        SolverState state = SolverState::start(problem, in.pot);
        auto value = [&] {
            refresh_state(problem, state);
            return dual_objective(problem, state.potentials, state.cache, config.cost());
        };
        double prev = value();
        auto check = [&](double next) {
            worst = std::max(worst, (prev - next) / std::max(1.0, std::abs(prev)));
            prev = next;
            ++steps;
        };
        const int n = problem.n_steps();
        for (int k = 0; k <= n; ++k) {
            solve_marginal_block(problem, state, config, k);
            check(value());
            solve_price_block(problem, state, config, k);
            check(value());
            if (k < n) {
                solve_driftvol_block(problem, state, config, k);
                check(value());
            }
        }
        for (int s = 0; s < 5; ++s)
            check(sweep(problem, state, config).dual_value);
    }
    return {worst <= 1e-9, std::to_string(steps) + " updates, worst relative decrease " + fmt("%.2e", worst)};
}

Outcome normal_kl_closed_form() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> mu(-1.0, 1.0);
    std::uniform_real_distribution<double> sd(0.05, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double m1 = mu(rng), s1 = sd(rng), m0 = mu(rng), s0 = sd(rng);
        auto logpdf = [](double x, double m, double s) {
            const double z = (x - m) / s;
            return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * M_PI);
        };
        auto f = [&](double x) {
            const double lp = logpdf(x, m1, s1);
            return std::exp(lp) * (lp - logpdf(x, m0, s0));
        };
        const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, m1 - 40.0 * s1,
                                                                                        m1 + 40.0 * s1, 20, 1e-13);
        worst = std::max(worst, std::abs(normal_kl(m1, s1, m0, s0) - q));
    }
    return {worst <= 1e-6, "20 pairs, max abs err " + fmt("%.2e", worst)};
}

// h KL between the constant-vol chain sigma and the reference chain sigma_ref, both
// with martingale drift, represented exactly through drift/vol-pair potentials.
double chain_kl(int n_steps, double sigma, double sigma_ref, double delta, double k_pts) {
    ReferenceSpec spec;
    spec.n_steps = n_steps;
    spec.ref_vol = constant_function(sigma_ref);
    spec.delta = delta;
    spec.k_pts = k_pts;
    const ChainProblem problem(build_reference_measure(spec), {}, StatisticB{StatisticKind::DriftVolPair});
    const double h = problem.h();
    const double mu1 = -0.5 * sigma * sigma;
    const double mu0 = -0.5 * sigma_ref * sigma_ref;
    const double phi1 = h * (mu1 / (sigma * sigma) - mu0 / (sigma_ref * sigma_ref));
    const double phi2 = 1.0 / (sigma_ref * sigma_ref) - 1.0 / (sigma * sigma);
    DualPotentials pot = DualPotentials::zeros(problem);
    const auto& ref = problem.reference();
    for (int k = 0; k < n_steps; ++k) {
        const auto& ker = ref.kernels[k];
        for (std::size_t i = 0; i < ker.rows(); ++i) {
            pot.phi_m[k][2 * i] = phi1;
            pot.phi_m[k][2 * i + 1] = phi2;
            // normalise every row so the tilted kernel is a transition law
            const auto& r = ker.row(i);
            std::vector<double> e(r.count);
            for (int c = 0; c < r.count; ++c) {
                const double dy = problem.step_at(ker.offset(i, r.first + c));
                e[c] = ker.log_weight(i, r.first + c) + (phi1 * dy + phi2 * 0.5 * dy * dy) / h;
            }
            pot.phi_nu[k][i] = -log_sum_exp(e);
        }
    }
    MessageCache cache = MessageCache::init(problem);
    refresh_all(problem, pot, cache);
    const Characteristics ch = extract_characteristics(problem, pot, cache);
    return specific_entropy(problem, pot, cache, ch).h_kl;
}

Outcome entropy_limit() {
    const auto t0 = Clock::now();
    const double target = 0.5 * (2.25 - 1.0 - std::log(2.25));
    std::vector<double> errors;
    std::string detail = "errors";
    for (int n : {10, 20, 40, 80}) {
        const double v = chain_kl(n, 0.3, 0.2, 8.0, 3.0);
        errors.push_back(std::abs(v - target));
        detail += fmt(" %.2e", errors.back());
    }
    bool monotone = true;
    for (std::size_t i = 1; i < errors.size(); ++i)
        monotone = monotone && errors[i] < errors[i - 1];
    const double secs = seconds_since(t0);
    detail += ", target " + fmt("%.5f", target);
    return {monotone && errors.back() <= 5e-3 && secs <= 60.0, detail};
}

Outcome martingale_stationarity() {
    ReferenceSpec spec;
    spec.n_steps = 20;
    spec.delta = 8.0;
    spec.k_pts = 50.0;
    spec.x0 = std::log(100.0);
    const ChainProblem problem(build_reference_measure(spec), {});
    SolverConfig config;
    SolverState state = SolverState::start(problem);
    refresh_state(problem, state);
    const double reach = spec.delta * 0.2 * std::sqrt(problem.h());
    double worst = 0.0;
    std::size_t points = 0;
    for (int k = 0; k < problem.n_steps(); ++k) {
        const auto g = driftvol_gradient(problem, state, config, k);
        const auto& ker = problem.reference().kernels[k];
        for (std::size_t i = 0; i < ker.rows(); ++i) {
            const auto& r = ker.row(i);
            const double lo = static_cast<double>(ker.offset(i, r.first)) * ker.dx() - r.mean;
            const double hi = static_cast<double>(ker.offset(i, r.first + r.count - 1)) * ker.dx() - r.mean;
            if (lo > -reach + ker.dx() || hi < reach - ker.dx())
                continue; // band clipped by the grid edge
            worst = std::max(worst, std::abs(g[i]));
            ++points;
        }
    }
    return {worst <= 1e-6 && points > 0, std::to_string(points) + " interior points, sup |grad| " + fmt("%.2e", worst)};
}

RunConfig desk_config() {
    RunConfig c;
    c.schedule = {11, 21};
    c.market.strike_counts = {3, 4, 5, 5, 6};
    c.k_pts = 20.0;
    c.w_price = 10.0;
    c.epsilon = 1e-5;
    c.max_sweeps = 1000;
    c.record_wall_time = false;
    return c;
}

struct DeskRun {
    CalibrationResult result;
    double seconds = 0.0;
    bool finite = true;
};

Outcome desk_scale(const DeskRun& run) {
    const auto& r = run.result;
    const double first = r.history.front().report.price_error_l2;
    const double reduction = first / r.price_error_l2;
    const bool ok = reduction >= 100.0 && r.martingale_error_l2 <= 1e-3 && r.max_iv_error() <= 0.005 &&
                    run.seconds <= 600.0;
    return {ok, "price err " + fmt("%.3e", first) + " -> " + fmt("%.3e", r.price_error_l2) + fmt(" (%.0fx)", reduction) +
                    ", mart err " + fmt("%.2e", r.martingale_error_l2) + ", max iv err " +
                    fmt("%.2e", r.max_iv_error()) + ", " + std::to_string(r.history.size()) + " sweeps, " +
                    fmt("%.0f s", run.seconds)};
}

Outcome complexity_scaling() {
    market::SyntheticMarketSpec ms;
    ms.strike_counts = {3, 4, 5, 5, 6};
    const auto ins = market::generate_synthetic_instruments({}, 100.0, ms);
    auto median_sweep_ms = [&](int points) {
        ReferenceSpec spec;
        spec.n_steps = points - 1;
        spec.maturities = ms.maturities;
        spec.x0 = std::log(100.0);
        spec.k_pts = 20.0;
        const ChainProblem problem(build_reference_measure(spec), ins);
        SolverConfig config;
        config.anderson_depth = 1;
        config.w_price = 10.0;
        SolverState state = SolverState::start(problem);
        refresh_state(problem, state);
        std::vector<double> ms_per;
        for (int s = 0; s < 5; ++s) {
            const auto t0 = Clock::now();
            sweep(problem, state, config);
            ms_per.push_back(1e3 * seconds_since(t0));
        }
        std::sort(ms_per.begin(), ms_per.end());
        return ms_per[ms_per.size() / 2];
    };
    const double t21 = median_sweep_ms(21);
    const double t81 = median_sweep_ms(81);
    const double ratio = t81 / t21;
    const double ideal = std::pow(81.0 / 21.0, 1.5);
    return {ratio >= 0.5 * ideal && ratio <= 2.0 * ideal,
            "median sweep " + fmt("%.0f ms", t21) + " vs " + fmt("%.0f ms", t81) + ", ratio " + fmt("%.2f", ratio) +
                " in [" + fmt("%.2f", 0.5 * ideal) + ", " + fmt("%.2f", 2.0 * ideal) + "]"};
}

struct Abort {};

Outcome anderson_benefit(const DeskRun& accelerated) {
    const auto& ra = accelerated.result;
    const bool reached = ra.converged;
    const int n_acc = static_cast<int>(ra.history.size());
    // plain iteration on the same problem, stopped as soon as it uses as many sweeps
    RunConfig c = desk_config();
    c.anderson_depth = 1;
    int n_plain = -1;
    try {
        const CalibrationResult rp = run_calibration(c, [&](const LevelSweep& s) {
            if (s.sweep >= n_acc && !(s.level == 1 && s.report.e_max < c.epsilon))
                throw Abort{};
        });
        n_plain = static_cast<int>(rp.history.size());
    } catch (const Abort&) {
        n_plain = -1;
    }
    const bool fewer = reached && (n_plain < 0 || n_acc < n_plain);
    const std::string plain = n_plain < 0 ? "not reached within " + std::to_string(n_acc) : std::to_string(n_plain);
    return {fewer && accelerated.finite, "sweeps to e_max < 1e-5: anderson " +
                                             (reached ? std::to_string(n_acc) : std::string("not reached")) +
                                             ", plain " + plain +
                                             (accelerated.finite ? ", all potentials finite" : ", non-finite potential")};
}

Outcome ssvi_sanity() {
    const market::SsviParams p;
    double worst_atm = 0.0;
    for (double t : {0.2, 0.4, 0.6, 0.8, 1.0})
        worst_atm = std::max(worst_atm, std::abs(std::sqrt(market::ssvi_total_variance(p, 0.0, t) / t) - 0.2));
    double worst_parity = 0.0;
    for (const auto& ins : market::generate_synthetic_instruments(p, 100.0)) {
        const auto call = market::ssvi_quote(p, 100.0, ins.maturity, ins.strike, market::OptionKind::Call);
        const auto put = market::ssvi_quote(p, 100.0, ins.maturity, ins.strike, market::OptionKind::Put);
        worst_parity = std::max(worst_parity, std::abs(call.price - put.price - (100.0 - ins.strike)));
    }
    return {worst_atm <= 1e-12 && worst_parity <= 1e-10,
            "ATM vol err " + fmt("%.1e", worst_atm) + ", parity err " + fmt("%.1e", worst_parity)};
}

} // namespace

int main() {
    std::printf("acceptance suite\n");
    const auto instances = small_instances(50);
    report("AC1", "oracle equivalence", [&] { return oracle_equivalence(instances); });
    report("AC2", "dual ascent", [&] { return dual_ascent(instances); });
    report("AC3", "normal KL closed form", normal_kl_closed_form);
    report("AC4", "specific entropy limit", entropy_limit);
    report("AC5", "martingale stationarity", martingale_stationarity);

    DeskRun desk;
    {
        const auto t0 = Clock::now();
        try {
            desk.result = run_calibration(desk_config(), [&](const LevelSweep& s) {
                desk.finite = desk.finite && std::isfinite(s.report.dual_value) && std::isfinite(s.report.e_max);
            });
            desk.finite = desk.finite && desk.result.state.potentials.all_finite();
        } catch (const std::exception& e) {
            std::printf("desk-scale run failed: %s\n", e.what());
            desk.finite = false;
        }
        desk.seconds = seconds_since(t0);
    }
    const bool have_desk = !desk.result.history.empty();
    report("AC6", "desk-scale calibration", [&] {
        return have_desk ? desk_scale(desk) : Outcome{false, "no run"};
    });
    report("AC7", "complexity scaling", complexity_scaling);
    report("AC8", "anderson benefit", [&] {
        return have_desk ? anderson_benefit(desk) : Outcome{false, "no run"};
    });
    report("AC9", "SSVI sanity", ssvi_sanity);

    std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
