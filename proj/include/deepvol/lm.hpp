#pragma once

// Levenberg-Marquardt calibration of model parameters to implied-volatility
// quotes, with residuals and Jacobians supplied by a trained network.
//
// Sign convention: the damped normal equations are solved with a minus on the
// right-hand side, [J'WJ + lambda*I] d = -J'WR, so that accepted steps
// descend the weighted residual -- which is what the gain-ratio acceptance
// rule presupposes.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <deepvol/dataset.hpp>
#include <deepvol/errors.hpp>
#include <deepvol/nn.hpp>
#include <deepvol/quotes.hpp>
#include <deepvol/sampling.hpp>

namespace deepvol {

// Rectangular bounds for the model parameters; trial steps that leave the box
// are clipped to its face.
struct ParamBox {
    Eigen::VectorXd lower, upper;

    bool empty() const { return lower.size() == 0 && upper.size() == 0; }

    void validate() const {
        if (lower.size() != upper.size() || lower.size() == 0)
            throw std::invalid_argument("ParamBox: lower and upper must have equal nonzero size");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (!(lower(i) < upper(i)))
                throw std::invalid_argument("ParamBox: requires lower < upper componentwise");
    }

    Eigen::VectorXd clip(const Eigen::VectorXd& mu) const {
        return mu.cwiseMax(lower).cwiseMin(upper);
    }

    bool contains(const Eigen::VectorXd& mu) const {
        return (mu.array() >= lower.array()).all() && (mu.array() <= upper.array()).all();
    }
};

struct LMConfig {
    double lambda0 = 1e-2;  // initial damping
    int n_max = 200;        // iteration cap
    double eps_min = 1e-8;  // step-norm stopping tolerance
    double beta0 = 0.25;    // gain ratio at or below this rejects the step
    double beta1 = 0.75;    // gain ratio at or above this also halves the damping
    ParamBox box;           // empty => the support of the model's sampling priors

    void validate() const {
        if (!(lambda0 > 0.0)) throw std::invalid_argument("LMConfig: lambda0 must be > 0");
        if (n_max < 1) throw std::invalid_argument("LMConfig: n_max must be >= 1");
        if (!(eps_min > 0.0)) throw std::invalid_argument("LMConfig: eps_min must be > 0");
        if (!(0.0 < beta0 && beta0 < beta1 && beta1 < 1.0))
            throw std::invalid_argument("LMConfig: requires 0 < beta0 < beta1 < 1");
        if (!box.empty()) box.validate();
    }
};

inline std::size_t model_param_count(ModelKind model) {
    return detail::input_columns(model).size() - 2;  // minus the (M, T) coordinates
}

// The support rectangle of the model's sampling priors: where the network saw
// training data, and hence the natural calibration domain.
inline ParamBox default_param_box(ModelKind model) {
    const std::vector<MarginalSpec> priors =
        model == ModelKind::heston ? heston_priors() : rbergomi_priors();
    ParamBox box;
    box.lower.resize(static_cast<Eigen::Index>(priors.size()));
    box.upper.resize(static_cast<Eigen::Index>(priors.size()));
    for (std::size_t i = 0; i < priors.size(); ++i) {
        box.lower(static_cast<Eigen::Index>(i)) = priors[i].support_lo();
        box.upper(static_cast<Eigen::Index>(i)) = priors[i].support_hi();
    }
    return box;
}

// A calibration instance: quotes to fit, the model and trained network that
// map parameters to implied vols, and the starting point.
struct CalibrationProblem {
    std::vector<IVQuote> quotes;
    ModelKind model = ModelKind::heston;
    Network net;
    Eigen::VectorXd mu0;

    void validate() const {
        const auto m = model_param_count(model);
        if (quotes.size() <= m)
            throw std::invalid_argument("CalibrationProblem: need more quotes than parameters (" +
                                        std::to_string(quotes.size()) + " quotes for " +
                                        std::to_string(m) + " parameters)");
        for (const auto& q : quotes) {
            q.validate();
            if (!(q.weight() > 0.0) || !std::isfinite(q.weight()))
                throw std::invalid_argument(
                    "CalibrationProblem: every quote needs a positive finite weight (zero spread?)");
        }
        net.validate();
        if (static_cast<std::size_t>(net.spec.input_dim) != m + 2)
            throw std::invalid_argument("CalibrationProblem: network input dimension " +
                                        std::to_string(net.spec.input_dim) + " does not match " +
                                        to_string(model) + " (" + std::to_string(m + 2) + ")");
        if (static_cast<std::size_t>(mu0.size()) != m)
            throw std::invalid_argument("CalibrationProblem: mu0 has wrong dimension");
    }
};

// Residual vector R_i = net(mu, M_i, T_i) - mid_i and the N x m Jacobian of R
// in the model parameters (the input-Jacobian with the coordinate columns
// dropped).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> residuals_and_jacobian(
    const CalibrationProblem& problem, const Eigen::VectorXd& mu) {
    const auto m = static_cast<Eigen::Index>(model_param_count(problem.model));
    const auto n = static_cast<Eigen::Index>(problem.quotes.size());
    Eigen::VectorXd r(n);
    Eigen::MatrixXd jac(n, m);
    Eigen::VectorXd x(m + 2);
    x.head(m) = mu;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& q = problem.quotes[static_cast<std::size_t>(i)];
        x(m) = q.coord.M;
        x(m + 1) = q.coord.T;
        r(i) = forward_one(problem.net, x) - q.mid();
        jac.row(i) = input_jacobian(problem.net, x).head(m).transpose();
    }
    return {std::move(r), std::move(jac)};
}

// Solve [J'WJ + lambda*I] d = -J'WR for the descent step d; W is the
// diagonal of quote weights.
inline Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& jac,
                                              const Eigen::VectorXd& weights,
                                              const Eigen::VectorXd& resid, double lambda) {
    if (jac.rows() != weights.size() || jac.rows() != resid.size())
        throw std::invalid_argument("solve_normal_equations: dimension mismatch");
    if (!(lambda >= 0.0)) throw std::invalid_argument("solve_normal_equations: lambda must be >= 0");
    const Eigen::MatrixXd jw = jac.transpose() * weights.asDiagonal();
    Eigen::MatrixXd a = jw * jac;
    a.diagonal().array() += lambda;
    const Eigen::VectorXd b = -(jw * resid);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (lambda == 0.0) {
        const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
        if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-13 * d.maxCoeff())
            throw SingularSystem("solve_normal_equations: J'WJ is rank deficient and lambda = 0");
    }
    return ldlt.solve(b);
}

// Gain ratio: actual over predicted improvement of the plain Euclidean
// residual norm (unsquared, exactly as the acceptance rule defines them) --
// the weights are part of the call signature for uniformity with the solver
// but do not enter the ratio.  A predicted improvement below 1e-15 returns
// -infinity, forcing rejection.
inline double gain_ratio(const Eigen::VectorXd& resid_old, const Eigen::VectorXd& resid_new,
                         const Eigen::MatrixXd& jac, const Eigen::VectorXd& step,
                         const Eigen::VectorXd& /*weights*/ = Eigen::VectorXd()) {
    const double denom = resid_old.norm() - (resid_old + jac * step).norm();
    if (denom < 1e-15) return -std::numeric_limits<double>::infinity();
    return (resid_old.norm() - resid_new.norm()) / denom;
}

struct LMTraceRow {
    int iter = 0;
    Eigen::VectorXd mu;      // iterate the step was tried from
    double lambda = 0.0;     // damping used in the solve that produced the step
    double resid_norm = 0.0;     // ||R(mu)||_2
    double weighted_rmse = 0.0;  // sqrt(R'WR / N) with mean-one weights
    double step_norm = 0.0;      // ||trial step||_2 after box clipping
    double gain = 0.0;
    bool accepted = false;
};

struct CalibrationResult {
    Eigen::VectorXd mu;
    bool converged = false;  // step norm fell to eps_min before the iteration cap
    int iterations = 0;
    double resid_norm = 0.0;
    double weighted_rmse = 0.0;
    std::vector<LMTraceRow> trace;
};

// Provider of (R, J) at a parameter point; the network-backed version is
// built by calibrate(), and tests can substitute analytic residuals.
using ResidualProvider =
    std::function<std::pair<Eigen::VectorXd, Eigen::MatrixXd>(const Eigen::VectorXd&)>;

namespace detail {

inline double weighted_rmse_of(const Eigen::VectorXd& r, const Eigen::VectorXd& w) {
    return std::sqrt(r.cwiseProduct(w.cwiseProduct(r)).sum() / static_cast<double>(r.size()));
}

inline std::string format_point(const Eigen::VectorXd& p) {
    std::string s = "[";
    for (Eigen::Index i = 0; i < p.size(); ++i) s += (i ? ", " : "") + std::to_string(p(i));
    return s + "]";
}

}  // namespace detail

// Damped Gauss-Newton iteration over a generic residual provider; cfg.box
// must be set.  One trust decision per iteration: gain at or below beta0
// rejects the trial and doubles the damping (the cached R and J at the
// unchanged iterate are reused -- only the solve repeats); anything above
// beta0 accepts, and gain at or above beta1 also halves the damping.  Trial
// points are clipped to the parameter box and the clipped step is the one the
// gain ratio judges; a zero clipped step at an active face counts as
// convergence (stationary within the feasible box).
//
// Weights are normalized to unit mean internally, so the damping scale -- and
// with it the whole iterate sequence -- is invariant under rescaling all
// weights by a common factor.
inline CalibrationResult calibrate_with(const ResidualProvider& provider,
                                        const Eigen::VectorXd& weights_in,
                                        const Eigen::VectorXd& mu0, const LMConfig& cfg) {
    cfg.validate();
    cfg.box.validate();  // required here, not optional
    if (cfg.box.lower.size() != mu0.size())
        throw std::invalid_argument("calibrate: box dimension does not match mu0");
    if (weights_in.size() == 0 || !(weights_in.array() >= 0.0).all() || !(weights_in.mean() > 0.0))
        throw std::invalid_argument("calibrate: weights must be nonnegative with positive mean");
    const Eigen::VectorXd weights = weights_in / weights_in.mean();

    auto eval = [&](const Eigen::VectorXd& p) {
        auto rj = provider(p);
        if (!rj.first.allFinite() || !rj.second.allFinite())
            throw NonFiniteResidual("calibrate: residual or Jacobian is not finite at mu = " +
                                    detail::format_point(p));
        return rj;
    };

    CalibrationResult out;
    Eigen::VectorXd mu = cfg.box.clip(mu0);
    auto [resid, jac] = eval(mu);
    if (resid.size() != weights.size())
        throw std::invalid_argument("calibrate: provider and weights disagree on residual size");
    double lambda = cfg.lambda0;
    Eigen::VectorXd step = solve_normal_equations(jac, weights, resid, lambda);
    Eigen::VectorXd mu_try = cfg.box.clip(mu + step);
    Eigen::VectorXd clipped = mu_try - mu;

    int n = 0;
    while (n < cfg.n_max && clipped.norm() > cfg.eps_min) {
        auto [resid_try, jac_try] = eval(mu_try);
        const double gain = gain_ratio(resid, resid_try, jac, clipped, weights);

        LMTraceRow row;
        row.iter = n;
        row.mu = mu;
        row.lambda = lambda;
        row.resid_norm = resid.norm();
        row.weighted_rmse = detail::weighted_rmse_of(resid, weights);
        row.step_norm = clipped.norm();
        row.gain = gain;
        row.accepted = gain > cfg.beta0;
        out.trace.push_back(row);

        if (gain <= cfg.beta0) {
            lambda *= 2.0;  // rejected: keep mu and the cached (R, J)
        } else {
            mu = mu_try;
            resid = std::move(resid_try);
            jac = std::move(jac_try);
            if (gain >= cfg.beta1) lambda *= 0.5;
        }
        step = solve_normal_equations(jac, weights, resid, lambda);
        mu_try = cfg.box.clip(mu + step);
        clipped = mu_try - mu;
        ++n;
    }

    out.mu = mu;
    out.converged = clipped.norm() <= cfg.eps_min;
    out.iterations = n;
    out.resid_norm = resid.norm();
    out.weighted_rmse = detail::weighted_rmse_of(resid, weights);
    return out;
}

// Network-backed calibration of a quote set: damped Gauss-Newton with the
// gain-ratio trust rule above, quote weights mid/(ask - mid), and the model's
// prior-support box unless cfg.box says otherwise.
inline CalibrationResult calibrate(const CalibrationProblem& problem, const LMConfig& cfg = {}) {
    problem.validate();
    LMConfig resolved = cfg;
    if (resolved.box.empty()) resolved.box = default_param_box(problem.model);
    Eigen::VectorXd weights(static_cast<Eigen::Index>(problem.quotes.size()));
    for (std::size_t i = 0; i < problem.quotes.size(); ++i)
        weights(static_cast<Eigen::Index>(i)) = problem.quotes[i].weight();
    return calibrate_with(
        [&problem](const Eigen::VectorXd& mu) { return residuals_and_jacobian(problem, mu); },
        weights, problem.mu0, resolved);
}

}  // namespace deepvol
