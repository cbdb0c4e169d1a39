// Command-line driver: synthetic SSVI market -> multiscale calibration -> artifacts.

#include "smot/artifacts.hpp"
#include "smot/calibration.hpp"
#include "smot/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

namespace {

using nlohmann::json;

constexpr int kExitConverged = 0;
constexpr int kExitInputError = 1;
constexpr int kExitMaxSweeps = 2;
constexpr int kExitFailure = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 1-based line of the first occurrence of "key" in the document, 0 if absent.
int line_of_key(const std::string& text, const std::string& key) {
    const auto pos = text.find('"' + key + '"');
    if (pos == std::string::npos)
        return 0;
    int line = 1;
    for (std::size_t i = 0; i < pos; ++i)
        line += text[i] == '\n';
    return line;
}

class ConfigReader {
public:
    ConfigReader(std::string path, std::string text) : path_(std::move(path)), text_(std::move(text)) {
        try {
            doc_ = json::parse(text_);
        } catch (const json::parse_error& e) {
            throw ConfigError(path_ + ": " + e.what());
        }
        if (!doc_.is_object())
            throw ConfigError(path_ + ":1: the configuration must be a flat JSON object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!doc_.contains(key))
            return;
        try {
            out = doc_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(key, std::string("invalid value: ") + e.what());
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const {
        throw ConfigError(path_ + ":" + std::to_string(line_of_key(text_, key)) + ": '" + key + "' " + message);
    }

    void reject_unknown() const {
        for (const auto& item : doc_.items())
            if (!seen_.count(item.key()))
                fail(item.key(), "is not a recognised setting");
    }

private:
    std::string path_;
    std::string text_;
    json doc_;
    std::set<std::string> seen_;
};

smot::RunConfig read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path + ": cannot open configuration file");
    std::stringstream buf;
    buf << in.rdbuf();
    ConfigReader r(path, buf.str());

    smot::RunConfig c;
    r.get("spot", c.spot);
    r.get("ref_vol", c.ref_vol);
    r.get("horizon", c.horizon);
    r.get("schedule", c.schedule);
    r.get("delta", c.delta);
    r.get("K_pts", c.k_pts);
    r.get("epsilon", c.epsilon);
    r.get("max_sweeps", c.max_sweeps);
    r.get("newton_tol", c.newton_tol);
    r.get("newton_max_iter", c.newton_max_iter);
    r.get("c_mart", c.c_mart);
    r.get("w_price", c.w_price);
    r.get("anderson_depth", c.anderson_depth);
    std::string mode = "interpolate";
    r.get("refine_mode", mode);
    if (mode == "interpolate")
        c.refine_mode = smot::RefineMode::InterpolatePotentials;
    else if (mode == "rebuild")
        c.refine_mode = smot::RefineMode::RebuildReference;
    else
        r.fail("refine_mode", "must be \"interpolate\" or \"rebuild\"");
    r.get("ssvi_eta", c.ssvi.eta);
    r.get("ssvi_lambda", c.ssvi.lam);
    r.get("ssvi_rho", c.ssvi.rho);
    r.get("ssvi_theta_slope", c.ssvi.theta_slope);
    r.get("maturities", c.market.maturities);
    r.get("strike_counts", c.market.strike_counts);
    r.get("output_dir", c.output_dir);
    r.get("emit_plots", c.emit_plots);
    r.get("record_wall_time", c.record_wall_time);
    r.reject_unknown();
    return c;
}

void cap_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0)
        omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semimartingale optimal transport calibration of a synthetic SSVI market"};
    std::string config_path;
    std::string output_dir;
    bool emit_plots = false;
    int threads = 0;
    std::vector<int> schedule;
    double epsilon = 0.0;
    bool quiet = false;
    app.add_option("--config", config_path, "Flat JSON configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--output-dir", output_dir, "Directory for the CSV/SVG artifacts");
    app.add_flag("--emit-plots", emit_plots, "Also write SVG plots");
    app.add_option("--threads", threads, "Worker thread cap (default: SMOT_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--schedule", schedule, "Comma-separated time-point counts per level, e.g. 11,21")
        ->delimiter(',');
    app.add_option("--epsilon", epsilon, "Stopping tolerance on e_max")->check(CLI::PositiveNumber);
    app.add_flag("-q,--quiet", quiet, "Do not print per-sweep progress");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInputError;
    }

    smot::RunConfig config;
    try {
        config = read_config(config_path);
        if (!output_dir.empty())
            config.output_dir = output_dir;
        if (emit_plots)
            config.emit_plots = true;
        if (!schedule.empty())
            config.schedule = schedule;
        if (epsilon > 0.0)
            config.epsilon = epsilon;
        config.validate();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const smot::MaturityOffGrid& e) {
        std::cerr << "error: MaturityOffGrid: " << e.what() << '\n';
        return kExitInputError;
    } catch (const smot::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInputError;
    }

    if (threads == 0)
        if (const char* env = std::getenv("SMOT_THREADS"))
            threads = std::atoi(env);
    cap_threads(threads);

    try {
        const auto result = smot::run_calibration(config, [&](const smot::LevelSweep& s) {
            if (!quiet)
                std::fprintf(stderr, "level %d (N=%d) sweep %4d  e_max %.3e  price %.3e  mart %.3e  dual %.10f\n",
                             s.level, s.n_timesteps, s.sweep, s.report.e_max, s.report.price_error_l2,
                             s.report.martingale_error_l2, s.report.dual_value);
        });
        const auto files = smot::emit_artifacts(result, config);
        std::printf("price_err_l2 %.6e  mart_err_l2 %.6e  max_iv_err %.6e  sweeps %zu  files %zu -> %s\n",
                    result.price_error_l2, result.martingale_error_l2, result.max_iv_error(), result.history.size(),
                    files.size(), config.output_dir.c_str());
        return result.converged ? kExitConverged : kExitMaxSweeps;
    } catch (const smot::MaturityOffGrid& e) {
        std::cerr << "error: MaturityOffGrid: " << e.what() << '\n';
        return kExitInputError;
    } catch (const smot::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}
