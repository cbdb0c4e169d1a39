#include "smot/artifacts.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace smot {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

std::string maturity_tag(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

class Writer {
public:
    explicit Writer(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        const fs::path path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot open " + path.string() + " for writing");
        out << content;
        if (!out)
            throw std::runtime_error("failed writing " + path.string());
        written_.push_back(path);
    }

    std::vector<fs::path> written() const { return written_; }

private:
    fs::path dir_;
    std::vector<fs::path> written_;
};

std::string convergence_csv(const CalibrationResult& result) {
    std::ostringstream os;
    os << "sweep,level,n_timesteps,dual_value,e_max,price_err_l2,mart_err_l2,wall_ms\n";
    for (const auto& s : result.history)
        os << s.sweep << ',' << s.level << ',' << s.n_timesteps << ',' << num(s.report.dual_value) << ','
           << num(s.report.e_max) << ',' << num(s.report.price_error_l2) << ','
           << num(s.report.martingale_error_l2) << ',' << num(s.report.wall_ms) << '\n';
    return os.str();
}

std::string levels_csv(const CalibrationResult& result) {
    std::ostringstream os;
    os << "level,n_timesteps,first_sweep,last_sweep,converged,wall_ms\n";
    for (const auto& l : result.levels)
        os << l.level << ',' << l.n_timesteps << ',' << l.first_sweep << ',' << l.last_sweep << ','
           << (l.converged ? 1 : 0) << ',' << num(l.wall_ms) << '\n';
    return os.str();
}

std::vector<double> maturities_of(const CalibrationResult& result) {
    std::vector<double> ts;
    for (const auto& r : result.instruments)
        if (std::find(ts.begin(), ts.end(), r.instrument.maturity) == ts.end())
            ts.push_back(r.instrument.maturity);
    std::sort(ts.begin(), ts.end());
    return ts;
}

std::vector<const InstrumentResult*> smile_rows(const CalibrationResult& result, double t) {
    std::vector<const InstrumentResult*> rows;
    for (const auto& r : result.instruments)
        if (r.instrument.maturity == t)
            rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const InstrumentResult* a, const InstrumentResult* b) {
        return a->instrument.strike < b->instrument.strike;
    });
    return rows;
}

std::string smile_csv(const std::vector<const InstrumentResult*>& rows) {
    std::ostringstream os;
    os << "strike,kind,target_price,model_price,market_iv,model_iv\n";
    for (const auto* r : rows)
        os << num(r->instrument.strike) << ',' << market::to_string(r->instrument.kind) << ','
           << num(r->instrument.target_price) << ',' << num(r->model_price) << ',' << num(r->market_iv) << ','
           << num(r->model_iv) << '\n';
    return os.str();
}

std::string local_vol_csv(const CalibrationResult& result) {
    const LocalVolSurface s = local_vol_surface(*result.problem, result.characteristics);
    std::ostringstream os;
    os << "t,x,sigma\n";
    for (std::size_t k = 0; k < s.t.size(); ++k)
        for (std::size_t i = 0; i < s.x[k].size(); ++i)
            if (!s.masked[k][i])
                os << num(s.t[k]) << ',' << num(s.x[k][i]) << ',' << num(s.sigma[k][i]) << '\n';
    return os.str();
}

std::string marginal_csv(const CalibrationResult& result, int k) {
    const auto& grid = result.problem->reference().grids[k];
    std::ostringstream os;
    os << "x,density\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
        os << num(grid.x(i)) << ',' << num(result.marginals[k][i] / grid.dx) << '\n';
    return os.str();
}

std::string run_info(const CalibrationResult& result, const RunConfig& config) {
    nlohmann::ordered_json j;
    j["spot"] = config.spot;
    j["ref_vol"] = config.ref_vol;
    j["horizon"] = config.horizon;
    j["schedule"] = config.schedule;
    j["delta"] = config.delta;
    j["K_pts"] = config.k_pts;
    j["epsilon"] = config.epsilon;
    j["max_sweeps"] = config.max_sweeps;
    j["c_mart"] = config.c_mart;
    j["w_price"] = config.w_price;
    j["anderson_depth"] = config.anderson_depth;
    j["refine_mode"] = config.refine_mode == RefineMode::InterpolatePotentials ? "interpolate" : "rebuild";
    j["converged"] = result.converged;
    j["price_err_l2"] = result.price_error_l2;
    j["mart_err_l2"] = result.martingale_error_l2;
    j["max_iv_error"] = result.max_iv_error();
    j["h_kl"] = result.entropy.h_kl;
    j["s_limit"] = result.entropy.s_limit;
    j["mart_err_weighting"] = "sqrt(h * sum_k sum_x nu_k(x) b_k(x)^2), nu_k normalised marginal mass";
    j["marginal_density"] = "grid mass divided by dx";
    return j.dump(2) + "\n";
}

double finite_or_nan(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

} // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series, const std::vector<double>& markers) {
    constexpr double width = 640.0;
    constexpr double height = 420.0;
    constexpr double left = 70.0;
    constexpr double right = 20.0;
    constexpr double top = 40.0;
    constexpr double bottom = 50.0;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, s.y[i]);
                y1 = std::max(y1, s.y[i]);
            }
    if (!(x1 >= x0)) {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    if (x1 == x0)
        x1 = x0 + 1.0;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pw = width - left - right;
    const double ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4.0;
        const double yv = y0 + (y1 - y0) * t / 4.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << num(std::round(xv * 1e4) / 1e4)
           << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(std::round(yv * 1e4) / 1e4)
           << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << x_label
       << "</text>\n";
    os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
       << "</text>\n";
    for (double m : markers)
        if (m >= x0 && m <= x1)
            os << "<line x1=\"" << px(m) << "\" y1=\"" << top << "\" x2=\"" << px(m) << "\" y2=\"" << top + ph
               << "\" stroke=\"gray\" stroke-dasharray=\"4,3\"/>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 6];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        const auto& ser = series[s];
        for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i)
            if (std::isfinite(ser.x[i]) && std::isfinite(ser.y[i]))
                os << px(ser.x[i]) << ',' << py(ser.y[i]) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << left + 10 << "\" y=\"" << top + 16 + 14 * s << "\" fill=\"" << color << "\">"
           << ser.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<fs::path> emit_artifacts(const CalibrationResult& result, const RunConfig& config) {
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    Writer w(dir);
    w.write("convergence.csv", convergence_csv(result));
    w.write("levels.csv", levels_csv(result));
    w.write("local_vol.csv", local_vol_csv(result));
    w.write("run_info.json", run_info(result, config));

    const auto& tg = result.problem->reference().time_grid;
    const auto ts = maturities_of(result);
    std::vector<int> steps{0};
    for (double t : ts) {
        w.write("smile_" + maturity_tag(t) + ".csv", smile_csv(smile_rows(result, t)));
        steps.push_back(tg.index_of(t));
    }
    for (int k : steps)
        w.write("marginal_" + std::to_string(k) + ".csv", marginal_csv(result, k));

    if (config.emit_plots) {
        PlotSeries price{"log10 price error", {}, {}};
        PlotSeries mart{"log10 martingale error", {}, {}};
        for (const auto& s : result.history) {
            price.x.push_back(s.sweep);
            price.y.push_back(finite_or_nan(std::log10(s.report.price_error_l2)));
            mart.x.push_back(s.sweep);
            mart.y.push_back(finite_or_nan(std::log10(s.report.martingale_error_l2)));
        }
        std::vector<double> bars;
        for (std::size_t l = 1; l < result.levels.size(); ++l)
            bars.push_back(result.levels[l].first_sweep - 0.5);
        w.write("convergence.svg", svg_line_plot("Convergence", "sweep", "log10 L2 error", {price, mart}, bars));

        for (double t : ts) {
            PlotSeries mkt{"market", {}, {}};
            PlotSeries mdl{"model", {}, {}};
            for (const auto* r : smile_rows(result, t)) {
                mkt.x.push_back(r->instrument.strike);
                mkt.y.push_back(r->market_iv);
                mdl.x.push_back(r->instrument.strike);
                mdl.y.push_back(r->model_iv);
            }
            w.write("smile_" + maturity_tag(t) + ".svg",
                    svg_line_plot("Implied vol, T=" + maturity_tag(t), "strike", "implied vol", {mkt, mdl}));
        }

        std::vector<PlotSeries> lv;
        const auto surface = local_vol_surface(*result.problem, result.characteristics);
        for (double t : ts) {
            const int k = std::min(tg.index_of(t), static_cast<int>(surface.t.size()) - 1);
            PlotSeries s{"t=" + maturity_tag(surface.t[k]), {}, {}};
            for (std::size_t i = 0; i < surface.x[k].size(); ++i)
                if (!surface.masked[k][i] && result.marginals[k][i] > 1e-8) {
                    s.x.push_back(std::exp(surface.x[k][i]));
                    s.y.push_back(surface.sigma[k][i]);
                }
            lv.push_back(std::move(s));
        }
        w.write("local_vol.svg", svg_line_plot("Local volatility", "spot", "sigma", lv));
    }
    return w.written();
}

} // namespace smot
