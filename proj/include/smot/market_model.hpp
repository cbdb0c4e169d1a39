#pragma once

#include <string_view>
#include <vector>

namespace smot::market {

/// Power-law SSVI surface: w(k, t) = (theta/2) (1 + rho phi k + sqrt((phi k + rho)^2 + 1 - rho^2)),
/// with theta = theta_slope * t and phi(theta) = eta * theta^-lam.
struct SsviParams {
    double eta = 1.6;
    double lam = 0.4;
    double rho = -0.15;
    double theta_slope = 0.04;

    void validate() const;
};

enum class OptionKind { Call, Put };

std::string_view to_string(OptionKind kind);
OptionKind option_kind_from_string(std::string_view s);

/// One calibration target. The maturity is stored as a time; the timestep index
/// is resolved against a TimeGrid, since it changes between multiscale levels.
struct Instrument {
    double maturity = 0.0;
    double strike = 0.0;
    OptionKind kind = OptionKind::Call;
    double target_price = 0.0;
};

struct OptionQuote {
    double maturity = 0.0;
    double strike = 0.0;
    OptionKind kind = OptionKind::Call;
    double price = 0.0;
    double implied_vol = 0.0;
};

/// Observation times and per-maturity strike counts of the synthetic market.
/// Calls use strikes spot + 1 + 4j and puts spot - 1 - 4j for j = 0..strike_counts[i].
struct SyntheticMarketSpec {
    std::vector<double> maturities{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<int> strike_counts{5, 7, 9, 10, 12};
};

double ssvi_total_variance(const SsviParams& params, double log_moneyness, double t);

/// Undiscounted Black-Scholes price on a forward. Zero variance gives intrinsic value.
double black_scholes_price(double forward, double strike, double total_variance, OptionKind kind);

/// Inverts black_scholes_price for the volatility. Throws PriceOutOfBounds when
/// the price is not strictly inside the static arbitrage bounds.
double implied_vol(double forward, double strike, double t, double price, OptionKind kind);

std::vector<Instrument> generate_synthetic_instruments(const SsviParams& params, double spot,
                                                       const SyntheticMarketSpec& spec = {});

/// Market quote (SSVI vol and its Black-Scholes price) for one instrument.
OptionQuote ssvi_quote(const SsviParams& params, double spot, double maturity, double strike,
                       OptionKind kind);

/// Payoff in price units of an option evaluated at a log-price.
double payoff(OptionKind kind, double strike, double log_price);

} // namespace smot::market
