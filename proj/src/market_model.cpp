#include "smot/market_model.hpp"

#include "smot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace smot::market {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

bool all_finite(std::initializer_list<double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

} // namespace

void SsviParams::validate() const {
    if (!(eta > 0.0))
        throw InvalidArgument("ssvi: eta must be positive");
    if (!(lam > 0.0 && lam < 1.0))
        throw InvalidArgument("ssvi: lam must lie in (0, 1)");
    if (!(std::abs(rho) < 1.0))
        throw InvalidArgument("ssvi: |rho| must be < 1");
    if (!(theta_slope > 0.0))
        throw InvalidArgument("ssvi: theta_slope must be positive");
}

std::string_view to_string(OptionKind kind) { return kind == OptionKind::Call ? "call" : "put"; }

OptionKind option_kind_from_string(std::string_view s) {
    if (s == "call" || s == "Call" || s == "C")
        return OptionKind::Call;
    if (s == "put" || s == "Put" || s == "P")
        return OptionKind::Put;
    throw InvalidArgument("unknown option kind '" + std::string(s) + "'");
}

double ssvi_total_variance(const SsviParams& params, double log_moneyness, double t) {
    if (!all_finite({params.eta, params.lam, params.rho, params.theta_slope, log_moneyness, t}))
        throw InvalidArgument("ssvi_total_variance: non-finite input");
    if (!(t > 0.0))
        throw InvalidArgument("ssvi_total_variance: t must be positive");
    const double theta = params.theta_slope * t;
    const double phi = params.eta * std::pow(theta, -params.lam);
    const double pk = phi * log_moneyness;
    const double rho = params.rho;
    return 0.5 * theta * (1.0 + rho * pk + std::sqrt((pk + rho) * (pk + rho) + 1.0 - rho * rho));
}

double black_scholes_price(double forward, double strike, double total_variance, OptionKind kind) {
    if (!(forward > 0.0) || !(strike > 0.0) || !(total_variance >= 0.0))
        throw InvalidArgument("black_scholes_price: invalid inputs");
    const double intrinsic = kind == OptionKind::Call ? std::max(forward - strike, 0.0)
                                                      : std::max(strike - forward, 0.0);
    if (total_variance == 0.0)
        return intrinsic;
    const double sd = std::sqrt(total_variance);
    const double d1 = std::log(forward / strike) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    double price = kind == OptionKind::Call ? forward * normal_cdf(d1) - strike * normal_cdf(d2)
                                            : strike * normal_cdf(-d2) - forward * normal_cdf(-d1);
    return std::max(price, intrinsic);
}

double implied_vol(double forward, double strike, double t, double price, OptionKind kind) {
    if (!(forward > 0.0) || !(strike > 0.0) || !(t > 0.0) || !std::isfinite(price))
        throw InvalidArgument("implied_vol: invalid inputs");
    const double intrinsic = kind == OptionKind::Call ? std::max(forward - strike, 0.0)
                                                      : std::max(strike - forward, 0.0);
    const double upper = kind == OptionKind::Call ? forward : strike;
    if (!(price > intrinsic) || !(price < upper))
        throw PriceOutOfBounds("implied_vol: price " + std::to_string(price) +
                               " outside arbitrage bounds (" + std::to_string(intrinsic) + ", " +
                               std::to_string(upper) + ")");

    auto f = [&](double vol) { return black_scholes_price(forward, strike, vol * vol * t, kind) - price; };

    double lo = 1e-6;
    double hi = 5.0;
    if (f(lo) >= 0.0) {
        // price within the tiny-vol region: the root lies in (0, lo]
        hi = lo;
        lo = 0.0;
    }
    while (f(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e3)
            throw PriceOutOfBounds("implied_vol: no volatility reproduces the price");
    }

    double vol = 0.5 * (lo + hi);
    for (int it = 0; it < 100 && hi - lo > 1e-10 * std::max(1.0, hi); ++it) {
        vol = 0.5 * (lo + hi);
        (f(vol) < 0.0 ? lo : hi) = vol;
    }
    vol = 0.5 * (lo + hi);

    // Newton polish inside the bracket
    for (int it = 0; it < 20; ++it) {
        const double diff = f(vol);
        if (std::abs(diff) <= 1e-12)
            break;
        const double sd = vol * std::sqrt(t);
        const double d1 = std::log(forward / strike) / sd + 0.5 * sd;
        const double vega = forward * normal_pdf(d1) * std::sqrt(t);
        if (!(vega > 0.0))
            break;
        const double next = vol - diff / vega;
        if (!(next > lo && next < hi))
            break;
        (diff < 0.0 ? lo : hi) = vol;
        vol = next;
    }
    return vol;
}

OptionQuote ssvi_quote(const SsviParams& params, double spot, double maturity, double strike,
                       OptionKind kind) {
    const double w = ssvi_total_variance(params, std::log(strike / spot), maturity);
    OptionQuote q;
    q.maturity = maturity;
    q.strike = strike;
    q.kind = kind;
    q.price = black_scholes_price(spot, strike, w, kind);
    q.implied_vol = std::sqrt(w / maturity);
    return q;
}

std::vector<Instrument> generate_synthetic_instruments(const SsviParams& params, double spot,
                                                       const SyntheticMarketSpec& spec) {
    params.validate();
    if (!(spot > 0.0))
        throw InvalidArgument("generate_synthetic_instruments: spot must be positive");
    if (spec.maturities.size() != spec.strike_counts.size())
        throw InvalidArgument("generate_synthetic_instruments: one strike count per maturity");

    std::vector<Instrument> out;
    for (std::size_t m = 0; m < spec.maturities.size(); ++m) {
        const double t = spec.maturities[m];
        for (int j = 0; j <= spec.strike_counts[m]; ++j) {
            const double k = spot + 1.0 + 4.0 * j;
            out.push_back({t, k, OptionKind::Call, ssvi_quote(params, spot, t, k, OptionKind::Call).price});
        }
        for (int j = 0; j <= spec.strike_counts[m]; ++j) {
            const double k = spot - 1.0 - 4.0 * j;
            if (!(k > 0.0))
                break;
            out.push_back({t, k, OptionKind::Put, ssvi_quote(params, spot, t, k, OptionKind::Put).price});
        }
    }
    return out;
}

double payoff(OptionKind kind, double strike, double log_price) {
    const double s = std::exp(log_price);
    return kind == OptionKind::Call ? std::max(0.0, s - strike) : std::max(0.0, strike - s);
}

} // namespace smot::market
