#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "deepvol/bs.hpp"
#include "deepvol/errors.hpp"
#include "deepvol/math.hpp"
#include "deepvol/parallel.hpp"
#include "deepvol/rng.hpp"

namespace deepvol {

struct HestonParams {
    double lambda;  // mean-reversion speed
    double v_bar;   // long-run variance
    double v0;      // spot variance
    double rho;     // spot/vol correlation
    double eta;     // vol of vol

    bool feller_satisfied() const { return 2.0 * lambda * v_bar > eta * eta; }

    void validate() const {
        auto pos = [](double x) { return std::isfinite(x) && x > 0.0; };
        if (!pos(lambda) || !pos(v_bar) || !pos(v0) || !pos(eta))
            throw std::invalid_argument("HestonParams: lambda, v_bar, v0, eta must be positive");
        if (!(std::isfinite(rho) && rho > -1.0 && rho < 1.0))
            throw std::invalid_argument("HestonParams: rho must lie in (-1, 1)");
    }
};

namespace detail {

// log(1 + z) for complex z without losing small |z| to rounding against 1.
inline std::complex<double> clog1p(std::complex<double> z) {
    if (std::abs(z) < 1e-4)
        return z * (1.0 - z * (0.5 - z * (1.0 / 3.0 - z * 0.25)));
    return std::log(1.0 + z);
}

}  // namespace detail

// Characteristic function E[exp(iu log S_T)] with S0 = 1, r = 0, in the
// branch-cut-safe parameterization (the root with Re >= 0 and the "g" ratio
// that stays inside the unit disk), so the complex log never jumps even for
// long maturities. beta - d is evaluated through beta^2 - d^2 to stay exact
// as eta -> 0, and the log term goes through log1p so the eta^2 division
// keeps its digits.
inline std::complex<double> heston_cf(const HestonParams& p, std::complex<double> u, double T) {
    p.validate();
    if (!(std::isfinite(T) && T > 0.0))
        throw std::invalid_argument("heston_cf: maturity must be positive");
    if (u == std::complex<double>(0.0, 0.0)) return {1.0, 0.0};

    const std::complex<double> iu(-u.imag(), u.real());
    const double eta2 = p.eta * p.eta;
    const std::complex<double> beta = p.lambda - p.rho * p.eta * iu;
    const std::complex<double> a = iu + u * u;  // iu + u^2
    const std::complex<double> d = std::sqrt(beta * beta + eta2 * a);
    const std::complex<double> bpd = beta + d;
    const std::complex<double> bmd = -eta2 * a / bpd;  // beta - d, cancellation-free
    const std::complex<double> g = bmd / bpd;
    const std::complex<double> e = std::exp(-d * T);

    const std::complex<double> D = (-a / bpd) * (1.0 - e) / (1.0 - g * e);
    const std::complex<double> log_ratio = detail::clog1p(-g * e) - detail::clog1p(-g);
    const std::complex<double> C =
        p.lambda * p.v_bar * (-a * T / bpd - 2.0 * log_ratio / eta2);

    const std::complex<double> expo = C + D * p.v0;
    if (expo.real() > 700.0)
        throw Error("heston_cf: exponent overflow");
    return std::exp(expo);
}

// Call price by Fourier inversion along the Re(u) axis shifted to the strip
// midpoint: price = intrinsic + tv with
//   tv = sqrt(M) * exp(-|k|/2) - (sqrt(M)/pi) * I,
//   I = int_0^umax Re[exp(-iuk) cf(u - i/2)] / (u^2 + 1/4) du,
// k = log M. The constant part of the integrand integrates in closed form to
// the exp(-|k|/2) term, so truncation only discards the (exponentially small)
// cf tail; umax is pushed out until |cf(u - i/2)| is negligible.
inline double heston_price(const HestonParams& p, const OptionCoord& coord) {
    p.validate();
    coord.validate();
    const double M = coord.M, T = coord.T;
    const double k = std::log(M);
    const double sM = std::sqrt(M);
    const std::complex<double> half_i(0.0, -0.5);

    auto cf_shifted = [&](double u) { return heston_cf(p, std::complex<double>(u, -0.5), T); };

    double umax = 200.0;
    for (;;) {
        double m = 0.0;
        for (double f : {1.0, 0.93, 0.82})
            m = std::max(m, std::abs(cf_shifted(umax * f)));
        if (m < 1e-13) break;
        umax *= 2.0;
        if (umax > 2e5)
            throw QuadratureNotConverged("heston_price: characteristic function decays too slowly");
    }

    auto integrand = [&](double u) {
        const std::complex<double> phase(std::cos(u * k), -std::sin(u * k));
        return (phase * cf_shifted(u)).real() / (u * u + 0.25);
    };
    // Far OTM/ITM the price rides on an O(1) cancellation, so the integral
    // needs a much smaller absolute floor than the liquid region does.
    const double tol_price = std::fabs(k) > 4.6 ? 1e-12 : 1e-9;
    const double tol = tol_price * pi / sM;
    double integral = 0.0;
    if (std::fabs(k) < 0.5) {
        const QuadResult q = integrate_lobatto(integrand, 0.0, umax, tol, 48, 400000);
        if (!q.converged)
            throw QuadratureNotConverged("heston_price: quadrature refinement cap reached");
        integral = q.value;
    } else {
        // Oscillatory phase: integrate one period at a time so per-interval
        // errors cannot pile up across hundreds of oscillations.
        const double period = 2.0 * pi / std::fabs(k);
        const std::size_t n_chunks = static_cast<std::size_t>(std::ceil(umax / period));
        const double chunk_tol = tol / static_cast<double>(n_chunks);
        int negligible_run = 0;
        for (std::size_t j = 0; j < n_chunks; ++j) {
            const double a = static_cast<double>(j) * period;
            const double b = std::min(umax, a + period);
            const QuadResult q = integrate_lobatto(integrand, a, b, chunk_tol, 30, 20000);
            if (!q.converged)
                throw QuadratureNotConverged("heston_price: quadrature refinement cap reached");
            integral += q.value;
            if (std::fabs(q.value) < 1e-3 * chunk_tol) {
                if (++negligible_run >= 3) break;
            } else {
                negligible_run = 0;
            }
        }
    }

    const double tv = sM * std::exp(-0.5 * std::fabs(k)) - (sM / pi) * integral;
    const double intrinsic = M < 1.0 ? 1.0 - M : 0.0;
    double price = intrinsic + (tv > 0.0 ? tv : 0.0);
    return price < 1.0 ? price : 1.0;
}

// Implied volatility of the Fourier price. PriceOutOfBounds propagates for
// coordinates whose time value is below the representable threshold.
inline double heston_iv(const HestonParams& p, const OptionCoord& coord) {
    return implied_vol(coord, heston_price(p, coord));
}


// Full-truncation Euler Monte Carlo oracle. v^+ enters both drift and
// diffusion, which keeps the scheme well defined when Feller's condition
// fails (the reference parameters do fail it). Paths are laid out in fixed
// blocks with one RNG substream per block, so the estimate is bit-identical
// for any worker count.
inline McEstimate heston_mc_price(const HestonParams& p, const OptionCoord& coord,
                                  std::size_t n_paths, std::size_t n_steps,
                                  std::uint64_t seed) {
    p.validate();
    coord.validate();
    if (n_paths < 1000)
        throw std::invalid_argument("heston_mc_price: need at least 1000 paths");
    if (n_steps < 1)
        throw std::invalid_argument("heston_mc_price: need at least one step");

    const double dt = coord.T / static_cast<double>(n_steps);
    const double sdt = std::sqrt(dt);
    const double rho_perp = std::sqrt(1.0 - p.rho * p.rho);
    const std::size_t block = 256;
    const std::size_t nblocks = (n_paths + block - 1) / block;
    std::vector<double> bsum(nblocks, 0.0), bsum2(nblocks, 0.0);

    parallel_blocks(n_paths, block, [&](std::size_t bi, std::size_t lo, std::size_t hi) {
        RandomStream rs(seed, bi);
        double s = 0.0, s2 = 0.0;
        for (std::size_t path = lo; path < hi; ++path) {
            double v = p.v0, x = 0.0;
            for (std::size_t step = 0; step < n_steps; ++step) {
                const double zv = rs.normal();
                const double zp = rs.normal();
                const double vp = v > 0.0 ? v : 0.0;
                const double sv = std::sqrt(vp);
                x += -0.5 * vp * dt + sv * sdt * (p.rho * zv + rho_perp * zp);
                v += p.lambda * (p.v_bar - vp) * dt + p.eta * sv * sdt * zv;
            }
            const double payoff = std::exp(x) - coord.M;
            const double pay = payoff > 0.0 ? payoff : 0.0;
            s += pay;
            s2 += pay * pay;
        }
        bsum[bi] = s;
        bsum2[bi] = s2;
    });

    double sum = 0.0, sum2 = 0.0;
    for (std::size_t bi = 0; bi < nblocks; ++bi) {
        sum += bsum[bi];
        sum2 += bsum2[bi];
    }
    const double n = static_cast<double>(n_paths);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

}  // namespace deepvol
