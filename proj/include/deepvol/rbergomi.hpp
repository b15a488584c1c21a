#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "deepvol/bs.hpp"
#include "deepvol/errors.hpp"
#include "deepvol/math.hpp"
#include "deepvol/parallel.hpp"
#include "deepvol/rng.hpp"

namespace deepvol {

struct RBergomiParams {
    double H;    // Hurst parameter
    double eta;  // vol of vol
    double rho;  // spot/vol correlation
    double v0;   // flat forward variance level

    void validate() const {
        if (!(std::isfinite(H) && H > 0.0 && H < 1.0))
            throw std::invalid_argument("RBergomiParams: H must lie in (0, 1)");
        if (!(std::isfinite(eta) && eta > 0.0))
            throw std::invalid_argument("RBergomiParams: eta must be positive");
        if (!(std::isfinite(rho) && rho > -1.0 && rho < 1.0))
            throw std::invalid_argument("RBergomiParams: rho must lie in (-1, 1)");
        if (!(std::isfinite(v0) && v0 > 0.0))
            throw std::invalid_argument("RBergomiParams: v0 must be positive");
    }
};

enum class RBergomiScheme { exact_cholesky, hybrid };

struct MCConfig {
    std::size_t n_paths = 40000;
    std::size_t steps_per_year = 500;
    RBergomiScheme scheme = RBergomiScheme::hybrid;
    bool antithetic = true;
    bool conditional_mc = true;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_paths < 2) throw std::invalid_argument("MCConfig: need at least 2 paths");
        if (steps_per_year < 4)
            throw std::invalid_argument("MCConfig: need at least 4 steps per year");
        if (antithetic && n_paths % 2 != 0)
            throw std::invalid_argument("MCConfig: antithetic sampling needs an even path count");
    }
};

// Cov(W^H_s, W^H_t) = 2H int_0^s (t-u)^(H-1/2) (s-u)^(H-1/2) du for the
// Riemann-Liouville fractional Brownian motion W^H_t = sqrt(2H) int_0^t
// (t-s)^(H-1/2) dW_s, with 0 <= s <= t. Scaling u = s*y turns it into
//   Cov = (2H/p) * s^(2H) * (t/s)^(H-1/2) * F(1/2-H, 1; H+3/2; s/t),
// a Gauss hypergeometric series whose term ratio tends to s/t, so it is
// evaluated directly except near the diagonal. There the kernel singularity
// at u = s (for H < 1/2) is absorbed exactly by the substitution
// w = (s-u)^(H+1/2):
//   Cov = (2H/p) int_0^{s^p} (t - s + w^(1/p))^(H-1/2) dw,  p = H + 1/2,
// leaving a bounded integrand for adaptive Gauss-Kronrod. Both branches
// agree to ~1e-12 relative where they overlap.
inline double rl_fbm_cov(double H, double s, double t) {
    if (!(std::isfinite(H) && H > 0.0 && H < 1.0))
        throw std::invalid_argument("rl_fbm_cov: H must lie in (0, 1)");
    if (!(std::isfinite(s) && std::isfinite(t) && 0.0 <= s && s <= t))
        throw std::invalid_argument("rl_fbm_cov: need 0 <= s <= t");
    if (s == 0.0) return 0.0;
    if (s == t) return std::pow(t, 2.0 * H);
    const double p = H + 0.5, g = H - 0.5;
    const double z = s / t;
    if (z <= 0.999) {
        const double a = 0.5 - H, c = H + 1.5;
        double term = 1.0, sum = 1.0;
        for (int k = 0; k < 200000; ++k) {
            term *= (a + k) / (c + k) * z;
            sum += term;
            if (std::fabs(term) < 1e-16 * std::fabs(sum) && k >= 4) break;
        }
        return (2.0 * H / p) * std::pow(s, 2.0 * H) * std::pow(t / s, g) * sum;
    }
    const double wmax = std::pow(s, p);
    auto f = [&](double w) { return std::pow(t - s + std::pow(w, 1.0 / p), g); };
    auto [crude, crude_err] = gauss_kronrod_15(f, 0.0, wmax);
    (void)crude_err;
    QuadResult q = integrate_gk15(f, 0.0, wmax, std::max(1e-300, 1e-11 * std::fabs(crude)), 100);
    if (std::fabs(q.value - crude) > 0.5 * std::fabs(q.value))
        q = integrate_gk15(f, 0.0, wmax, std::max(1e-300, 1e-11 * std::fabs(q.value)), 100);
    return (2.0 * H / p) * q.value;
}

// Cov(W^H_t, W_s) = sqrt(2H)/(H+1/2) * [t^(H+1/2) - (t - min(s,t))^(H+1/2)],
// evaluated through expm1/log1p so small s/t keeps full precision.
inline double cross_cov(double H, double s, double t) {
    if (!(std::isfinite(H) && H > 0.0 && H < 1.0))
        throw std::invalid_argument("cross_cov: H must lie in (0, 1)");
    if (!(std::isfinite(s) && std::isfinite(t) && s >= 0.0 && t >= 0.0))
        throw std::invalid_argument("cross_cov: need s, t >= 0");
    const double m = std::min(s, t);
    if (m <= 0.0 || t <= 0.0) return 0.0;
    const double p = H + 0.5;
    const double c = std::sqrt(2.0 * H) / p;
    if (m == t) return c * std::pow(t, p);
    return c * std::pow(t, p) * (-std::expm1(p * std::log1p(-m / t)));
}

namespace detail {

// Joint Gaussian drivers on the unit-spaced grid 1..n are self-similar, so
// one factorization per (H, n, scheme) serves every maturity: physical paths
// follow by scaling W with sqrt(dt) and W^H with dt^H.
struct ExactFactor {
    Eigen::MatrixXd L;  // lower Cholesky factor of the 2n x 2n joint covariance
};

struct HybridKernel {
    double c1 = 0.0, c2 = 0.0;  // unit-grid bivariate factor for (dW, G)
    Eigen::MatrixXd K;          // lower-triangular far-kernel convolution matrix
};

inline std::shared_ptr<const ExactFactor> exact_factor(double H, std::size_t n) {
    static std::mutex mu;
    static std::map<std::pair<double, std::size_t>, std::shared_ptr<const ExactFactor>> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find({H, n});
        if (it != cache.end()) return it->second;
    }
    const auto ni = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd sigma(2 * ni, 2 * ni);
    for (Eigen::Index i = 0; i < ni; ++i)
        for (Eigen::Index j = 0; j < ni; ++j)
            sigma(i, j) = static_cast<double>(std::min(i, j) + 1);
    for (Eigen::Index i = 0; i < ni; ++i) {
        for (Eigen::Index j = i; j < ni; ++j) {
            const double c = rl_fbm_cov(H, static_cast<double>(i + 1), static_cast<double>(j + 1));
            sigma(ni + i, ni + j) = c;
            sigma(ni + j, ni + i) = c;
        }
    }
    for (Eigen::Index i = 0; i < ni; ++i) {
        for (Eigen::Index j = 0; j < ni; ++j) {
            const double c =
                cross_cov(H, static_cast<double>(j + 1), static_cast<double>(i + 1));
            sigma(ni + i, j) = c;
            sigma(j, ni + i) = c;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        sigma.diagonal().array() += 1e-12;
        llt.compute(sigma);
        if (llt.info() != Eigen::Success)
            throw CovarianceNotPD("exact scheme: joint covariance failed to factorize");
    }
    auto out = std::make_shared<ExactFactor>();
    out->L = llt.matrixL();
    std::lock_guard<std::mutex> lock(mu);
    // dataset generation walks through many distinct H values; keep the
    // cache bounded (in-flight users hold shared_ptrs, so clearing is safe)
    if (cache.size() >= 16) cache.clear();
    cache.insert({{H, n}, out});
    return out;
}

inline std::shared_ptr<const HybridKernel> hybrid_kernel(double H, std::size_t n) {
    static std::mutex mu;
    static std::map<std::pair<double, std::size_t>, std::shared_ptr<const HybridKernel>> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find({H, n});
        if (it != cache.end()) return it->second;
    }
    const double p = H + 0.5;
    auto out = std::make_shared<HybridKernel>();
    // unit grid: Var(dW) = 1, Var(G) = 1/(2H), Cov(dW, G) = 1/p
    out->c1 = 1.0 / p;
    out->c2 = std::sqrt(std::max(0.0, 1.0 / (2.0 * H) - 1.0 / (p * p)));
    // far-kernel weight at lag l is the interval average of u^(H-1/2) over
    // [l-1, l]; K(k, j) applies it to increment j+1 contributing to time k+1
    std::vector<double> far(n >= 2 ? n - 1 : 0);
    for (std::size_t l = 2; l <= n; ++l) {
        const double lf = static_cast<double>(l);
        far[l - 2] = (std::pow(lf, p) - std::pow(lf - 1.0, p)) / p;
    }
    const auto ni = static_cast<Eigen::Index>(n);
    out->K = Eigen::MatrixXd::Zero(ni, ni);
    for (Eigen::Index k = 0; k < ni; ++k)
        for (Eigen::Index j = 0; j < k; ++j)
            out->K(k, j) = far[static_cast<std::size_t>(k - j) - 1];
    std::lock_guard<std::mutex> lock(mu);
    if (cache.size() >= 16) cache.clear();
    cache.insert({{H, n}, out});
    return out;
}

struct GridSpec {
    std::size_t n = 0;
    double dt = 0.0;
};

inline GridSpec make_grid(double T, const MCConfig& cfg) {
    if (!(std::isfinite(T) && T > 0.0))
        throw std::invalid_argument("rbergomi: maturity must be positive");
    const double raw = T * static_cast<double>(cfg.steps_per_year);
    auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    if (n < 1) n = 1;
    if (cfg.scheme == RBergomiScheme::exact_cholesky && n > 2048)
        throw std::invalid_argument("rbergomi: exact scheme capped at 2048 grid steps");
    return {n, T / static_cast<double>(n)};
}

// Fills dW (paths x n, physical Brownian increments) and WH (paths x n, W^H
// at grid times t_1..t_n) for one block of paths. Draw order per base path:
// the joint Gaussians first (2n of them), then n orthogonal spot drivers
// into Zp. Antithetic odd rows negate the preceding even row.
inline void sample_block(const RBergomiParams& p, const GridSpec& grid, const MCConfig& cfg,
                         std::uint64_t block_index, Eigen::Index n_rows, Eigen::MatrixXd& dW,
                         Eigen::MatrixXd& WH, Eigen::MatrixXd& Zp, bool want_perp) {
    const auto n = static_cast<Eigen::Index>(grid.n);
    RandomStream rs(cfg.seed, block_index);
    Eigen::MatrixXd Z(n_rows, 2 * n);
    if (want_perp) Zp.resize(n_rows, n);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        if (cfg.antithetic && r % 2 == 1) {
            Z.row(r) = -Z.row(r - 1);
            if (want_perp) Zp.row(r) = -Zp.row(r - 1);
            continue;
        }
        for (Eigen::Index c = 0; c < 2 * n; ++c) Z(r, c) = rs.normal();
        if (want_perp)
            for (Eigen::Index c = 0; c < n; ++c) Zp(r, c) = rs.normal();
    }

    const double sdt = std::sqrt(grid.dt);
    const double dth = std::pow(grid.dt, p.H);
    if (cfg.scheme == RBergomiScheme::exact_cholesky) {
        const auto fac = exact_factor(p.H, grid.n);
        Eigen::MatrixXd Y = Z * fac->L.transpose();  // cols 0..n-1: W, n..2n-1: W^H
        dW.resize(n_rows, n);
        dW.col(0) = sdt * Y.col(0);
        for (Eigen::Index k = 1; k < n; ++k) dW.col(k) = sdt * (Y.col(k) - Y.col(k - 1));
        WH = dth * Y.rightCols(n);
    } else {
        const auto ker = hybrid_kernel(p.H, grid.n);
        const auto Z1 = Z.leftCols(n);   // drives dW
        const auto Z2 = Z.rightCols(n);  // orthogonal part of the exact near integral
        dW = sdt * Z1;
        // exact lag-1 integral G plus the far Riemann part, all on the unit grid
        Eigen::MatrixXd WHu = ker->c1 * Z1 + ker->c2 * Z2;
        if (grid.n >= 2) WHu.noalias() += Z1 * ker->K.transpose();
        WH = (std::sqrt(2.0 * p.H) * dth) * WHu;
    }
}

}  // namespace detail

// Materialized ensemble of spot and variance paths on the uniform grid
// t_0 = 0, ..., t_n = T (paths by rows).
struct PathEnsemble {
    std::vector<double> times;
    Eigen::MatrixXd S;
    Eigen::MatrixXd v;
};

inline PathEnsemble simulate_paths(const RBergomiParams& params, double T, const MCConfig& cfg) {
    params.validate();
    cfg.validate();
    const detail::GridSpec grid = detail::make_grid(T, cfg);
    const auto n = static_cast<Eigen::Index>(grid.n);
    const auto P = static_cast<Eigen::Index>(cfg.n_paths);

    PathEnsemble out;
    out.times.resize(grid.n + 1);
    for (std::size_t j = 0; j <= grid.n; ++j) out.times[j] = grid.dt * static_cast<double>(j);
    out.S.resize(P, n + 1);
    out.v.resize(P, n + 1);

    const double rho_perp = std::sqrt(1.0 - params.rho * params.rho);
    const double sdt = std::sqrt(grid.dt);
    std::vector<double> vdrift(grid.n + 1, 0.0);  // (eta^2/2) t_k^{2H}
    for (std::size_t k = 1; k <= grid.n; ++k)
        vdrift[k] = 0.5 * params.eta * params.eta * std::pow(out.times[k], 2.0 * params.H);

    parallel_blocks(cfg.n_paths, 256, [&](std::size_t bi, std::size_t lo, std::size_t hi) {
        const auto rows = static_cast<Eigen::Index>(hi - lo);
        Eigen::MatrixXd dW, WH, Zp;
        detail::sample_block(params, grid, cfg, bi, rows, dW, WH, Zp, true);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto pr = static_cast<Eigen::Index>(lo) + r;
            double x = 0.0;
            out.S(pr, 0) = 1.0;
            out.v(pr, 0) = params.v0;
            for (Eigen::Index k = 1; k <= n; ++k) {
                const double v_left = out.v(pr, k - 1);
                const double sv = std::sqrt(v_left);
                x += -0.5 * v_left * grid.dt +
                     sv * (params.rho * dW(r, k - 1) + rho_perp * sdt * Zp(r, k - 1));
                out.S(pr, k) = std::exp(x);
                out.v(pr, k) = params.v0 * std::exp(params.eta * WH(r, k - 1) -
                                                    vdrift[static_cast<std::size_t>(k)]);
            }
        }
    });
    return out;
}

// One implied-vol (or price) point of a simulated surface.
struct SurfacePoint {
    OptionCoord coord{1.0, 1.0};
    double price = 0.0;
    double std_error = 0.0;
    double iv = std::numeric_limits<double>::quiet_NaN();  // NaN if not invertible
};

// Prices a batch of coordinates off one shared path ensemble. All maturities
// must lie on the simulation grid spanned by the largest one. With
// conditional_mc the payoff is replaced by its Black-Scholes conditional
// expectation given the vol-driving Brownian component (rho-mixing), which
// is unbiased for the same discretization and markedly lower variance.
inline std::vector<SurfacePoint> rbergomi_surface(const RBergomiParams& params,
                                                  const std::vector<OptionCoord>& coords,
                                                  const MCConfig& cfg) {
    params.validate();
    cfg.validate();
    if (coords.empty()) return {};
    double t_max = 0.0;
    for (const auto& c : coords) {
        c.validate();
        t_max = std::max(t_max, c.T);
    }
    const detail::GridSpec grid = detail::make_grid(t_max, cfg);

    // map each coordinate to its grid index
    std::vector<std::size_t> cidx(coords.size());
    std::vector<bool> is_checkpoint(grid.n + 1, false);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double fj = coords[i].T / grid.dt;
        const auto j = static_cast<std::size_t>(std::llround(fj));
        if (j < 1 || j > grid.n || std::fabs(fj - static_cast<double>(j)) > 1e-6)
            throw std::invalid_argument(
                "rbergomi_surface: every maturity must lie on the simulation grid");
        cidx[i] = j;
        is_checkpoint[j] = true;
    }

    const double rho = params.rho;
    const double rho_perp = std::sqrt(1.0 - rho * rho);
    const double sdt = std::sqrt(grid.dt);
    const std::size_t block = 256;
    const std::size_t n_units_total =
        cfg.antithetic ? cfg.n_paths / 2 : cfg.n_paths;  // iid units for the error bars
    const std::size_t nblocks = (cfg.n_paths + block - 1) / block;
    const auto nc = coords.size();
    std::vector<double> vdrift(grid.n + 1, 0.0);  // (eta^2/2) t_k^{2H}
    for (std::size_t k = 1; k <= grid.n; ++k)
        vdrift[k] = 0.5 * params.eta * params.eta *
                    std::pow(grid.dt * static_cast<double>(k), 2.0 * params.H);

    std::vector<std::vector<double>> bsum(nblocks), bsum2(nblocks);

    parallel_blocks(cfg.n_paths, block, [&](std::size_t bi, std::size_t lo, std::size_t hi) {
        const auto rows = static_cast<Eigen::Index>(hi - lo);
        Eigen::MatrixXd dW, WH, Zp;
        detail::sample_block(params, grid, cfg, bi, rows, dW, WH, Zp, !cfg.conditional_mc);
        std::vector<double> s1(nc, 0.0), s2(nc, 0.0);
        std::vector<double> unit_vals(nc, 0.0), path_vals(nc, 0.0);
        for (Eigen::Index r = 0; r < rows; ++r) {
            double I1 = 0.0, I2 = 0.0, x = 0.0;
            double v_left = params.v0;
            for (std::size_t k = 1; k <= grid.n; ++k) {
                const auto kc = static_cast<Eigen::Index>(k - 1);
                const double sv = std::sqrt(v_left);
                I1 += sv * dW(r, kc);
                I2 += v_left * grid.dt;
                if (!cfg.conditional_mc)
                    x += -0.5 * v_left * grid.dt +
                         sv * (rho * dW(r, kc) + rho_perp * sdt * Zp(r, kc));
                if (is_checkpoint[k]) {
                    for (std::size_t i = 0; i < nc; ++i) {
                        if (cidx[i] != k) continue;
                        if (cfg.conditional_mc) {
                            // E[(S_T - M)^+ | vol path] = F * BS(M/F, sigma_c)
                            const double logF = rho * I1 - 0.5 * rho * rho * I2;
                            if (logF < -690.0) {
                                // conditional forward underflowed: the call is
                                // worth nothing on this path (value <= F)
                                path_vals[i] = 0.0;
                            } else {
                                const double F = std::exp(logF);
                                const double sigma_c =
                                    std::sqrt((1.0 - rho * rho) * I2 / coords[i].T);
                                path_vals[i] =
                                    F * bs_price({coords[i].M / F, coords[i].T}, sigma_c);
                            }
                        } else {
                            const double pay = std::exp(x) - coords[i].M;
                            path_vals[i] = pay > 0.0 ? pay : 0.0;
                        }
                    }
                }
                v_left = params.v0 * std::exp(params.eta * WH(r, kc) - vdrift[k]);
            }
            if (cfg.antithetic) {
                if (r % 2 == 0) {
                    unit_vals = path_vals;
                } else {
                    for (std::size_t i = 0; i < nc; ++i) {
                        const double y = 0.5 * (unit_vals[i] + path_vals[i]);
                        s1[i] += y;
                        s2[i] += y * y;
                    }
                }
            } else {
                for (std::size_t i = 0; i < nc; ++i) {
                    s1[i] += path_vals[i];
                    s2[i] += path_vals[i] * path_vals[i];
                }
            }
        }
        bsum[bi] = std::move(s1);
        bsum2[bi] = std::move(s2);
    });

    std::vector<SurfacePoint> out(nc);
    const double nu = static_cast<double>(n_units_total);
    for (std::size_t i = 0; i < nc; ++i) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t bi = 0; bi < nblocks; ++bi) {
            s += bsum[bi][i];
            s2 += bsum2[bi][i];
        }
        const double mean = s / nu;
        const double var = nu > 1.5 ? std::max(0.0, (s2 - nu * mean * mean) / (nu - 1.0)) : 0.0;
        out[i].coord = coords[i];
        out[i].price = mean;
        out[i].std_error = std::sqrt(var / nu);
        try {
            out[i].iv = implied_vol(coords[i], mean);
        } catch (const PriceOutOfBounds&) {
            // leave NaN: price carries no invertible information
        }
    }
    return out;
}

inline McEstimate rbergomi_mc_price(const RBergomiParams& params, const OptionCoord& coord,
                                    const MCConfig& cfg) {
    const auto pts = rbergomi_surface(params, {coord}, cfg);
    return {pts[0].price, pts[0].std_error};
}

inline double rbergomi_iv(const RBergomiParams& params, const OptionCoord& coord,
                          const MCConfig& cfg) {
    const auto pts = rbergomi_surface(params, {coord}, cfg);
    if (!std::isfinite(pts[0].iv))
        throw PriceOutOfBounds("rbergomi_iv: simulated price is not invertible");
    return pts[0].iv;
}

}  // namespace deepvol
