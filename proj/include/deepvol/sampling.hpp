#pragma once

// Sampling machinery for synthetic data generation: marginal priors over
// model parameters, a liquidity-weighted Gaussian KDE over (log-moneyness,
// maturity), and bounded rejection sampling from it.

#include <array>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <deepvol/errors.hpp>
#include <deepvol/math.hpp>
#include <deepvol/rng.hpp>

namespace deepvol {

enum class MarginalKind { uniform, trunc_normal, trunc_normal_squared };

// One marginal prior: U[a,b], a normal(loc, scale) truncated to [a,b], or
// the square of such a truncated normal.
struct MarginalSpec {
    MarginalKind kind = MarginalKind::uniform;
    double a = 0.0;
    double b = 1.0;
    double loc = 0.0;
    double scale = 1.0;

    void validate() const {
        if (!(std::isfinite(a) && std::isfinite(b) && a < b))
            throw std::invalid_argument("MarginalSpec: requires a < b");
        if (kind != MarginalKind::uniform &&
            !(std::isfinite(loc) && std::isfinite(scale) && scale > 0.0))
            throw std::invalid_argument("MarginalSpec: requires finite loc and scale > 0");
        if (kind == MarginalKind::trunc_normal_squared && a < 0.0)
            throw std::invalid_argument(
                "MarginalSpec: the squared kind needs a >= 0 so that squaring is monotone");
    }

    // Support of the resulting distribution ([a,b], squared for the squared
    // kind; draws there are nonnegative by construction).
    double support_lo() const {
        return kind == MarginalKind::trunc_normal_squared ? a * a : a;
    }
    double support_hi() const {
        return kind == MarginalKind::trunc_normal_squared ? b * b : b;
    }
};

inline double sample_marginal(const MarginalSpec& spec, RandomStream& rng) {
    spec.validate();
    switch (spec.kind) {
        case MarginalKind::uniform:
            return rng.uniform(spec.a, spec.b);
        case MarginalKind::trunc_normal:
        case MarginalKind::trunc_normal_squared: {
            // inverse-CDF on the quantile range the interval [a,b] occupies
            const double qa = norm_cdf((spec.a - spec.loc) / spec.scale);
            const double qb = norm_cdf((spec.b - spec.loc) / spec.scale);
            double u = qa + (qb - qa) * rng.uniform();
            // rounding can push u onto an endpoint when qb is 1 (or qa is 0)
            // to machine precision; keep it strictly inside (0, 1)
            u = std::min(std::nextafter(1.0, 0.0), std::max(std::nextafter(0.0, 1.0), u));
            const double x = spec.loc + spec.scale * inv_norm_cdf(u);
            const double clipped = std::min(spec.b, std::max(spec.a, x));
            return spec.kind == MarginalKind::trunc_normal ? clipped : clipped * clipped;
        }
    }
    throw std::logic_error("sample_marginal: unknown kind");
}

// Density of the truncated normal (before squaring); used by tests and
// diagnostics.
inline double trunc_normal_pdf(const MarginalSpec& spec, double x) {
    spec.validate();
    if (spec.kind == MarginalKind::uniform)
        return (x >= spec.a && x <= spec.b) ? 1.0 / (spec.b - spec.a) : 0.0;
    if (x < spec.a || x > spec.b) return 0.0;
    const double z = (x - spec.loc) / spec.scale;
    const double qa = norm_cdf((spec.a - spec.loc) / spec.scale);
    const double qb = norm_cdf((spec.b - spec.loc) / spec.scale);
    return norm_pdf(z) / (spec.scale * (qb - qa));
}

// Normalized log density of the marginal itself (for the squared kind, the
// change-of-variables density of Z^2 with Z the truncated normal); -infinity
// outside the support.
inline double marginal_log_density(const MarginalSpec& spec, double x) {
    spec.validate();
    if (x < spec.support_lo() || x > spec.support_hi())
        return -std::numeric_limits<double>::infinity();
    switch (spec.kind) {
        case MarginalKind::uniform:
            return -std::log(spec.b - spec.a);
        case MarginalKind::trunc_normal:
            return std::log(trunc_normal_pdf(spec, x));
        case MarginalKind::trunc_normal_squared: {
            const double z = std::sqrt(x);
            // f_X(x) = f_Z(sqrt(x)) / (2 sqrt(x))
            return std::log(trunc_normal_pdf(spec, z)) - std::log(2.0 * z);
        }
    }
    throw std::logic_error("marginal_log_density: unknown kind");
}

// CDF of the marginal on its support (squared kind: P(Z^2 <= x) = F_Z(sqrt x)).
inline double marginal_cdf(const MarginalSpec& spec, double x) {
    spec.validate();
    if (x <= spec.support_lo()) return 0.0;
    if (x >= spec.support_hi()) return 1.0;
    if (spec.kind == MarginalKind::uniform) return (x - spec.a) / (spec.b - spec.a);
    const double y = spec.kind == MarginalKind::trunc_normal_squared ? std::sqrt(x) : x;
    const double qa = norm_cdf((spec.a - spec.loc) / spec.scale);
    const double qb = norm_cdf((spec.b - spec.loc) / spec.scale);
    return (norm_cdf((y - spec.loc) / spec.scale) - qa) / (qb - qa);
}

// Rectangular sampling domain for (log-moneyness, maturity) pairs.
struct CoordBox {
    double m_lo, m_hi;
    double T_lo, T_hi;

    void validate() const {
        if (!(m_lo < m_hi) || !(T_lo < T_hi) || !(T_lo > 0.0))
            throw std::invalid_argument("CoordBox: requires m_lo < m_hi and 0 < T_lo < T_hi");
    }
    bool contains(double m, double T) const {
        return m >= m_lo && m <= m_hi && T >= T_lo && T <= T_hi;
    }
};

// Liquidity-weighted bivariate Gaussian mixture over (m, T): one component
// per observed quote, component probability proportional to its weight,
// common covariance from Scott's rule on the weighted sample.
struct WeightedKDE {
    Eigen::Matrix2d bandwidth;               // kernel covariance (PD)
    std::vector<std::array<double, 2>> points;  // (m, T) centers
    std::vector<double> cum_weights;         // normalized cumulative weights

    // internals derived from `bandwidth`
    Eigen::Matrix2d chol;  // lower-triangular factor
    Eigen::Matrix2d inv;
    double norm_const = 0.0;  // 1 / (2 pi sqrt(det))

    double density(double m, double T) const {
        double acc = 0.0;
        double prev = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double w = cum_weights[i] - prev;
            prev = cum_weights[i];
            const double dx = m - points[i][0], dy = T - points[i][1];
            const double q =
                inv(0, 0) * dx * dx + 2.0 * inv(0, 1) * dx * dy + inv(1, 1) * dy * dy;
            acc += w * std::exp(-0.5 * q);
        }
        return norm_const * acc;
    }
};

// Fits the mixture with Scott's-rule bandwidth using the weighted effective
// sample size. A singular weighted covariance (e.g. a single point or
// collinear points) is rescued with a diagonal jitter and a warning.
inline WeightedKDE fit_wkde(const std::vector<std::array<double, 2>>& points,
                            const std::vector<double>& weights, double bandwidth_scale = 1.0) {
    if (points.empty() || points.size() != weights.size())
        throw std::invalid_argument("fit_wkde: needs matching, non-empty points and weights");
    if (!(bandwidth_scale > 0.0))
        throw std::invalid_argument("fit_wkde: bandwidth_scale must be positive");
    double wsum = 0.0, w2sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::invalid_argument("fit_wkde: weights must be nonnegative");
        wsum += w;
        w2sum += w * w;
    }
    if (!(wsum > 0.0)) throw std::invalid_argument("fit_wkde: weights must not all be zero");

    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < points.size(); ++i)
        mean += weights[i] * Eigen::Vector2d(points[i][0], points[i][1]);
    mean /= wsum;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Eigen::Vector2d d = Eigen::Vector2d(points[i][0], points[i][1]) - mean;
        cov += weights[i] * d * d.transpose();
    }
    cov /= wsum;

    // Scott's rule in d = 2: kernel covariance = n_eff^(-2/(d+4)) * cov
    const double n_eff = wsum * wsum / w2sum;
    Eigen::Matrix2d bw = std::pow(n_eff, -1.0 / 3.0) * bandwidth_scale * bandwidth_scale * cov;

    Eigen::LLT<Eigen::Matrix2d> llt(bw);
    if (llt.info() != Eigen::Success || !(bw.determinant() > 0.0) || !bw.allFinite()) {
        const double jitter = std::max(1e-12, 1e-8 * std::abs(bw.trace()));
        bw(0, 0) += jitter;
        bw(1, 1) += jitter;
        std::cerr << "fit_wkde: weighted covariance is singular; added diagonal jitter "
                  << jitter << "\n";
        llt.compute(bw);
        if (llt.info() != Eigen::Success)
            throw CovarianceNotPD("fit_wkde: bandwidth matrix not positive definite after jitter");
    }

    WeightedKDE kde;
    kde.bandwidth = bw;
    kde.points = points;
    kde.cum_weights.resize(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i] / wsum;
        kde.cum_weights[i] = acc;
    }
    kde.cum_weights.back() = 1.0;
    kde.chol = llt.matrixL();
    kde.inv = bw.inverse();
    kde.norm_const = 1.0 / (2.0 * pi * std::sqrt(bw.determinant()));
    return kde;
}

// Draws one (m, T) pair: picks a component with probability proportional to
// its weight, adds kernel noise, and rejects draws falling outside `box`.
inline std::array<double, 2> sample_wkde(const WeightedKDE& kde, const CoordBox& box,
                                         RandomStream& rng) {
    box.validate();
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const double u = rng.uniform();
        const auto it = std::lower_bound(kde.cum_weights.begin(), kde.cum_weights.end(), u);
        const auto i = static_cast<std::size_t>(it - kde.cum_weights.begin());
        const Eigen::Vector2d z(rng.normal(), rng.normal());
        const Eigen::Vector2d x =
            Eigen::Vector2d(kde.points[i][0], kde.points[i][1]) + kde.chol * z;
        if (box.contains(x(0), x(1))) return {x(0), x(1)};
    }
    throw RejectionStall("sample_wkde: 10000 consecutive draws fell outside the domain box");
}

inline std::array<double, 2> sample_box_uniform(const CoordBox& box, RandomStream& rng) {
    box.validate();
    return {rng.uniform(box.m_lo, box.m_hi), rng.uniform(box.T_lo, box.T_hi)};
}

// ---------------------------------------------------------------------------
// model-specific priors and sampling domains
// ---------------------------------------------------------------------------

// Heston marginals, in HestonParams field order (lambda, v_bar, v0, rho, eta).
inline std::vector<MarginalSpec> heston_priors() {
    return {
        {MarginalKind::uniform, 0.0, 10.0, 0.0, 1.0},  // lambda
        {MarginalKind::uniform, 0.0, 1.0, 0.0, 1.0},   // v_bar
        {MarginalKind::uniform, 0.0, 1.0, 0.0, 1.0},   // v0
        {MarginalKind::uniform, -1.0, 0.0, 0.0, 1.0},  // rho
        {MarginalKind::uniform, 0.0, 5.0, 0.0, 1.0},   // eta
    };
}

// Rough Bergomi marginals, in RBergomiParams field order (H, eta, rho, v0).
inline std::vector<MarginalSpec> rbergomi_priors() {
    return {
        {MarginalKind::trunc_normal, 0.01, 0.5, 0.07, 0.05},          // H
        {MarginalKind::trunc_normal, 1.0, 4.0, 2.5, 0.5},             // eta
        {MarginalKind::trunc_normal, -1.0, -0.5, -0.95, 0.2},         // rho
        {MarginalKind::trunc_normal_squared, 0.05, 1.0, 0.3, 0.1},    // v0
    };
}

inline CoordBox heston_box() { return {-0.1, 0.28, 1.0 / 365.0, 0.2}; }

inline CoordBox rbergomi_box() { return {-3.163, 0.391, 0.008, 2.589}; }

}  // namespace deepvol
