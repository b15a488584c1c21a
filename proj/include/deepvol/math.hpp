#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace deepvol {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double inv_sqrt_2pi = 0.39894228040143267794;
inline constexpr double sqrt2 = 1.41421356237309504880;

// Standard normal density.
inline double norm_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

// Standard normal CDF via the complementary error function. Accurate to full
// double precision in both tails (no catastrophic cancellation for x < 0).
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / sqrt2); }

// Upper tail P(X > x) without cancellation for large positive x.
inline double norm_cdf_upper(double x) { return 0.5 * std::erfc(x / sqrt2); }

// Inverse standard normal CDF, Wichura's algorithm AS 241 (PPND16 variant).
// Relative accuracy about 1e-16 over the full open interval (0, 1).
inline double inv_norm_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("inv_norm_cdf: p must lie in (0, 1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                  6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
              1.3314166789178437745e2) * r + 3.3871328727963666080e0);
        const double den =
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                  3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
              4.2313330701600911252e1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
        x = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        x = num / den;
    }
    return (q < 0.0) ? -x : x;
}

// --- CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320) ------------------

namespace detail {
inline const std::array<std::uint32_t, 256>& crc32_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1u) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    return table;
}
}  // namespace detail

// Streaming CRC-32 accumulator.
class Crc32 {
  public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        const auto& tab = detail::crc32_table();
        for (std::size_t i = 0; i < n; ++i)
            state_ = tab[(state_ ^ p[i]) & 0xFFu] ^ (state_ >> 8);
    }
    std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

  private:
    std::uint32_t state_ = 0xFFFFFFFFu;
};

inline std::uint32_t crc32(const void* data, std::size_t n) {
    Crc32 c;
    c.update(data, n);
    return c.value();
}

// --- Adaptive quadrature ----------------------------------------------------

struct QuadResult {
    double value = 0.0;
    bool converged = true;
    long evals = 0;
};

namespace detail {

struct LobattoBudget {
    double threshold;
    long evals;
    long max_evals;
    bool converged;
};

template <class F>
double lobatto_step(F& f, double a, double fa, double b, double fb, int depth,
                    LobattoBudget& bud) {
    static const double alpha = std::sqrt(2.0 / 3.0);
    static const double beta = 1.0 / std::sqrt(5.0);
    const double m = 0.5 * (a + b), h = 0.5 * (b - a);
    const double mll = m - alpha * h, ml = m - beta * h;
    const double mr = m + beta * h, mrr = m + alpha * h;
    const double fmll = f(mll), fml = f(ml), fm = f(m), fmr = f(mr), fmrr = f(mrr);
    bud.evals += 5;
    const double i2 = (h / 6.0) * (fa + fb + 5.0 * (fml + fmr));
    const double i1 = (h / 1470.0) * (77.0 * (fa + fb) + 432.0 * (fmll + fmrr) +
                                      625.0 * (fml + fmr) + 672.0 * fm);
    if (std::fabs(i1 - i2) <= bud.threshold || mll <= a || b <= mrr)
        return i1;
    if (depth <= 0 || bud.evals >= bud.max_evals) {
        bud.converged = false;
        return i1;
    }
    return lobatto_step(f, a, fa, mll, fmll, depth - 1, bud) +
           lobatto_step(f, mll, fmll, ml, fml, depth - 1, bud) +
           lobatto_step(f, ml, fml, m, fm, depth - 1, bud) +
           lobatto_step(f, m, fm, mr, fmr, depth - 1, bud) +
           lobatto_step(f, mr, fmr, mrr, fmrr, depth - 1, bud) +
           lobatto_step(f, mrr, fmrr, b, fb, depth - 1, bud);
}

}  // namespace detail

// Adaptive Lobatto quadrature after Gander and Gautschi. `abs_tol` is an
// absolute target for the whole interval; the error indicator is the gap
// between the embedded 4-point Lobatto and 7-point Kronrod rules, compared
// against the global target without per-interval splitting (the gap is a
// strong overestimate of the true local error). Endpoints are evaluated, so
// the integrand must be finite at `a` and `b`.
template <class F>
QuadResult integrate_lobatto(F&& f, double a, double b, double abs_tol,
                             int max_depth = 48, long max_evals = 200000) {
    if (!(b > a)) {
        if (a == b) return {0.0, true, 0};
        QuadResult r = integrate_lobatto(std::forward<F>(f), b, a, abs_tol, max_depth, max_evals);
        r.value = -r.value;
        return r;
    }
    static const double x1 = 0.942882415695480;
    static const double x2 = 0.641853342345781;
    static const double x3 = 0.236383199662150;
    static const double alpha = std::sqrt(2.0 / 3.0);
    static const double beta = 1.0 / std::sqrt(5.0);
    const double m = 0.5 * (a + b), h = 0.5 * (b - a);
    const double y[13] = {f(a),
                          f(m - x1 * h),
                          f(m - alpha * h),
                          f(m - x2 * h),
                          f(m - beta * h),
                          f(m - x3 * h),
                          f(m),
                          f(m + x3 * h),
                          f(m + beta * h),
                          f(m + x2 * h),
                          f(m + alpha * h),
                          f(m + x1 * h),
                          f(b)};
    const double is =
        h * (0.0158271919734802 * (y[0] + y[12]) + 0.0942738402188500 * (y[1] + y[11]) +
             0.155071987336585 * (y[2] + y[10]) + 0.188821573960182 * (y[3] + y[9]) +
             0.199773405226859 * (y[4] + y[8]) + 0.224926465333340 * (y[5] + y[7]) +
             0.242611071901408 * y[6]);
    detail::LobattoBudget bud;
    bud.threshold = std::max(abs_tol, std::fabs(is) * std::numeric_limits<double>::epsilon() * 10.0);
    bud.evals = 13;
    bud.max_evals = max_evals;
    bud.converged = true;
    const double v = detail::lobatto_step(f, a, y[0], b, y[12], max_depth, bud);
    return {v, bud.converged, bud.evals};
}

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (nodes/weights on [-1,1]).
inline constexpr double gk15_x[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double gk15_wk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double gk15_wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

}  // namespace detail

// One application of the Gauss-Kronrod 7-15 pair on [a, b].
// Returns {kronrod value, |kronrod - gauss|}.
template <class F>
std::pair<double, double> gauss_kronrod_15(F&& f, double a, double b) {
    const double m = 0.5 * (a + b), h = 0.5 * (b - a);
    double k = 0.0, g = 0.0;
    for (int i = 0; i < 7; ++i) {
        const double fl = f(m - h * detail::gk15_x[i]);
        const double fr = f(m + h * detail::gk15_x[i]);
        k += detail::gk15_wk[i] * (fl + fr);
        if (i % 2 == 1) g += detail::gk15_wg[i / 2] * (fl + fr);
    }
    const double fc = f(m);
    k += detail::gk15_wk[7] * fc;
    g += detail::gk15_wg[3] * fc;
    return {h * k, std::fabs(h * (k - g))};
}

namespace detail {

template <class F>
double gk15_step(F& f, double a, double b, double tol, int depth, QuadResult& acc) {
    auto [v, e] = gauss_kronrod_15(f, a, b);
    acc.evals += 15;
    if (e <= tol || depth <= 0) {
        if (e > tol) acc.converged = false;
        return v;
    }
    const double m = 0.5 * (a + b);
    return gk15_step(f, a, m, 0.5 * tol, depth - 1, acc) +
           gk15_step(f, m, b, 0.5 * tol, depth - 1, acc);
}

}  // namespace detail

// Adaptive bisection on the Gauss-Kronrod 7-15 pair with a per-interval error
// budget split in half at every subdivision. Mostly used to cross-check the
// Lobatto integrator.
template <class F>
QuadResult integrate_gk15(F&& f, double a, double b, double abs_tol, int max_depth = 40) {
    if (a == b) return {0.0, true, 0};
    QuadResult acc{0.0, true, 0};
    acc.value = detail::gk15_step(f, a, b, abs_tol, max_depth, acc);
    return acc;
}

// Linear-interpolation sample quantile (the convention spreadsheet software
// and R's default share): h = (n-1) q, result interpolates between the
// floor(h)-th and next order statistics. `sorted` must be ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile_sorted: q outside [0,1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Integrated autocorrelation time of a scalar series, summing empirical
// autocorrelations until they drop below 0.05 (capped at max_lag). Used to
// turn correlated MCMC draws into an effective sample size: ess = n / tau.
inline double integrated_autocorrelation_time(const std::vector<double>& series,
                                              std::size_t max_lag = 200) {
    const std::size_t n = series.size();
    if (n < 2) return 1.0;
    double mean = 0.0;
    for (double x : series) mean += x;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double x : series) c0 += (x - mean) * (x - mean);
    c0 /= static_cast<double>(n);
    if (!(c0 > 0.0)) return 1.0;
    double tau = 1.0;
    const std::size_t cap = std::min(max_lag, n / 2);
    for (std::size_t lag = 1; lag <= cap; ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i)
            c += (series[i] - mean) * (series[i + lag] - mean);
        c /= static_cast<double>(n);
        const double rho = c / c0;
        if (rho < 0.05) break;
        tau += 2.0 * rho;
    }
    return tau;
}

}  // namespace deepvol
