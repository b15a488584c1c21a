#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "deepvol/errors.hpp"
#include "deepvol/math.hpp"

namespace deepvol {

// Option coordinate under spot/rate normalization (S0 = 1, r = 0).
struct OptionCoord {
    double M;  // moneyness K / S0
    double T;  // maturity in years

    double log_moneyness() const { return std::log(M); }

    void validate() const {
        if (!(std::isfinite(M) && M > 0.0))
            throw std::invalid_argument("OptionCoord: moneyness must be finite and positive");
        if (!(std::isfinite(T) && T > 0.0))
            throw std::invalid_argument("OptionCoord: maturity must be finite and positive");
    }
};

// One observed implied-volatility quote with its liquidity weight.
struct MarketQuote {
    OptionCoord coord;
    double iv = 0.0;
    double weight = 0.0;
    std::optional<double> bid_iv;
    std::optional<double> ask_iv;

    void validate() const {
        coord.validate();
        if (!(std::isfinite(iv) && iv > 0.0))
            throw std::invalid_argument("MarketQuote: iv must be finite and positive");
        if (!(std::isfinite(weight) && weight >= 0.0))
            throw std::invalid_argument("MarketQuote: weight must be finite and nonnegative");
        if (bid_iv.has_value() != ask_iv.has_value())
            throw std::invalid_argument("MarketQuote: bid and ask must come together");
        if (bid_iv) {
            if (!(*bid_iv > 0.0) || !(*ask_iv >= *bid_iv))
                throw std::invalid_argument("MarketQuote: need 0 < bid_iv <= ask_iv");
            if (std::fabs(iv - 0.5 * (*bid_iv + *ask_iv)) > 1e-12)
                throw std::invalid_argument("MarketQuote: iv must be the bid/ask midpoint");
        }
    }
};

// A Monte Carlo estimate with its standard error.
struct McEstimate {
    double price = 0.0;
    double std_error = 0.0;
};

namespace detail {

inline void check_sigma(double sigma) {
    if (!(std::isfinite(sigma) && sigma > 0.0))
        throw std::invalid_argument("sigma must be finite and positive");
}

}  // namespace detail

// Time value of the normalized call: bs_price minus intrinsic max(1 - M, 0),
// computed without subtracting near-equal quantities. Positive for all
// sigma > 0, monotone increasing in sigma, and the natural quantity to invert
// for implied volatility (deep ITM prices sit a hair above intrinsic where
// the price itself carries no usable digits).
inline double bs_time_value(const OptionCoord& coord, double sigma) {
    coord.validate();
    detail::check_sigma(sigma);
    const double k = std::log(coord.M);
    const double st = sigma * std::sqrt(coord.T);
    const double d1 = -k / st + 0.5 * st;
    const double d2 = d1 - st;
    double tv;
    if (d2 >= 0.0) {
        // price = (1 - M) + [M*Phi(-d2) - Phi(-d1)], bracket is the time value
        tv = coord.M * norm_cdf(-d2) - norm_cdf(-d1);
    } else if (coord.M >= 1.0) {
        // OTM: intrinsic is zero, price is all time value
        tv = norm_cdf(d1) - coord.M * norm_cdf(d2);
    } else {
        // ITM but with d2 < 0 (large total vol): price minus intrinsic
        tv = (norm_cdf(d1) - coord.M * norm_cdf(d2)) - (1.0 - coord.M);
    }
    return tv > 0.0 ? tv : 0.0;
}

// Normalized Black-Scholes call price (spot 1, zero rate).
inline double bs_price(const OptionCoord& coord, double sigma) {
    const double intrinsic = coord.M < 1.0 ? 1.0 - coord.M : 0.0;
    double p = intrinsic + bs_time_value(coord, sigma);
    return p < 1.0 ? p : 1.0;
}

// d(bs_price)/d(sigma) = phi(d1) * sqrt(T).
inline double bs_vega(const OptionCoord& coord, double sigma) {
    coord.validate();
    detail::check_sigma(sigma);
    const double st = sigma * std::sqrt(coord.T);
    const double d1 = -std::log(coord.M) / st + 0.5 * st;
    return norm_pdf(d1) * std::sqrt(coord.T);
}

// Implied volatility by Newton iteration on log time value with a maintained
// bracket and bisection fallback. Working in log space keeps the iteration
// well conditioned across ~600 orders of magnitude of time value; prices whose
// time value is not representable above 1e-300 are rejected rather than mapped
// to a meaningless near-zero volatility.
inline double implied_vol(const OptionCoord& coord, double price) {
    coord.validate();
    if (!std::isfinite(price)) throw std::invalid_argument("implied_vol: price must be finite");
    const double intrinsic = coord.M < 1.0 ? 1.0 - coord.M : 0.0;
    if (!(price > intrinsic) || !(price < 1.0))
        throw PriceOutOfBounds("implied_vol: price outside the no-arbitrage band");
    const double target = price - intrinsic;
    if (!(target >= 1e-300))
        throw PriceOutOfBounds("implied_vol: time value below representable threshold");
    const double log_target = std::log(target);

    auto tv = [&](double s) { return bs_time_value(coord, s); };

    // Bracket the root in sigma.
    double lo = 1e-10, hi = 1.0;
    for (int i = 0; i < 64 && tv(hi) < target; ++i) hi *= 2.0;
    if (tv(hi) < target) throw NoConvergence("implied_vol: no upper bracket");
    for (int i = 0; i < 64 && !(tv(lo) < target); ++i) lo *= 0.25;
    if (!(tv(lo) < target)) throw NoConvergence("implied_vol: no lower bracket");

    double sigma = std::sqrt(lo * hi);
    {
        // Seed from the ATM expansion when it lands inside the bracket.
        const double guess = target * std::sqrt(2.0 * pi / coord.T);
        if (guess > lo && guess < hi) sigma = guess;
    }

    for (int it = 0; it < 200; ++it) {
        const double v = tv(sigma);
        if (v > target)
            hi = sigma;
        else if (v < target)
            lo = sigma;
        else
            return sigma;

        double next;
        const double vega = bs_vega(coord, sigma);
        if (v > 0.0 && vega > 0.0 && std::isfinite(vega / v)) {
            next = sigma - (std::log(v) - log_target) * v / vega;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        } else {
            next = 0.5 * (lo + hi);
        }
        const double step = std::fabs(next - sigma);
        sigma = next;
        if (step < 1e-11 * std::max(1.0, sigma) || hi - lo < 1e-11 * std::max(1.0, sigma))
            return sigma;
    }
    throw NoConvergence("implied_vol: iteration cap reached");
}

}  // namespace deepvol
