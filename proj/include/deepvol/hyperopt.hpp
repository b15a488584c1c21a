#pragma once

// Gaussian-process search over training hyperparameters: a Matérn-5/2
// surrogate fit by maximum marginal likelihood, lower-confidence-bound
// acquisition over the (log10 learning rate, log2 batch size) box, and a
// budgeted outer loop that trains one network per evaluation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <deepvol/errors.hpp>
#include <deepvol/lm.hpp>
#include <deepvol/nn.hpp>
#include <deepvol/rng.hpp>

namespace deepvol {

namespace detail {

// Classic Nelder-Mead simplex minimizer (reflect 1, expand 2, contract 0.5,
// shrink 0.5): derivative-free, deterministic, good enough for the handful of
// smooth low-dimensional searches here. Returns the best vertex found.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x0, double step, int max_iters) {
    const auto n = x0.size();
    std::vector<Eigen::VectorXd> x(static_cast<std::size_t>(n) + 1, x0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1);
    for (Eigen::Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i) + 1](i) += step;
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = f(x[i]);

    std::vector<std::size_t> order(x.size());
    for (int iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        const std::size_t best = order.front(), worst = order.back();
        if (v[worst] - v[best] < 1e-12) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i < order.size() - 1; ++i) centroid += x[order[i]];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd reflected = centroid + (centroid - x[worst]);
        const double v_r = f(reflected);
        if (v_r < v[best]) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - x[worst]);
            const double v_e = f(expanded);
            if (v_e < v_r) {
                x[worst] = expanded;
                v[worst] = v_e;
            } else {
                x[worst] = reflected;
                v[worst] = v_r;
            }
        } else if (v_r < v[order[order.size() - 2]]) {
            x[worst] = reflected;
            v[worst] = v_r;
        } else {
            const Eigen::VectorXd contracted =
                v_r < v[worst] ? centroid + 0.5 * (reflected - centroid)
                               : centroid + 0.5 * (x[worst] - centroid);
            const double v_c = f(contracted);
            if (v_c < std::min(v_r, v[worst])) {
                x[worst] = contracted;
                v[worst] = v_c;
            } else {  // shrink toward the best vertex
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (i == best) continue;
                    x[i] = x[best] + 0.5 * (x[i] - x[best]);
                    v[i] = f(x[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best]) best = i;
    return x[best];
}

// k-th point of the R_d low-discrepancy sequence on the unit cube (Kronecker
// sequence with the generalized-golden-ratio increment); k = 0 is the center.
inline Eigen::VectorXd quasirandom_point(Eigen::Index d, int k) {
    double g = 1.5;  // root of g^(d+1) = g + 1 by Newton iteration
    for (int it = 0; it < 60; ++it) {
        const double p = std::pow(g, static_cast<double>(d));
        g -= (p * g - g - 1.0) / ((static_cast<double>(d) + 1.0) * p - 1.0);
    }
    Eigen::VectorXd u(d);
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        alpha /= g;
        const double value = 0.5 + alpha * k;
        u(i) = value - std::floor(value);
    }
    return u;
}

inline double matern52(double signal_var, double scaled_dist) {
    const double s = std::sqrt(5.0) * scaled_dist;
    return signal_var * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

}  // namespace detail

// Gaussian-process regression surrogate with a Matérn-5/2 kernel over
// per-dimension lengthscales and a constant mean fixed at the sample mean of
// the observed values.
struct GPSurrogate {
    Eigen::MatrixXd x;           // n x d observed inputs
    Eigen::VectorXd y;           // n observed values
    double signal_var = 1.0;     // kernel variance at distance zero
    Eigen::VectorXd lengthscale; // d positive per-dimension scales
    double noise_var = 1e-8;     // observation noise variance

    // derived at construction
    double y_mean = 0.0;
    Eigen::LLT<Eigen::MatrixXd> chol;  // of K + noise_var * I
    Eigen::VectorXd alpha;             // (K + noise_var I)^{-1} (y - y_mean)

    Eigen::Index dim() const { return x.cols(); }
    Eigen::Index size() const { return x.rows(); }

    double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        const double r = ((a - b).cwiseQuotient(lengthscale)).norm();
        return detail::matern52(signal_var, r);
    }

    struct Prediction {
        double mean = 0.0;
        double var = 0.0;  // latent (noise-free) posterior variance
    };

    Prediction predict(const Eigen::VectorXd& xstar) const {
        if (xstar.size() != dim())
            throw std::invalid_argument("GPSurrogate: query point has wrong dimension");
        Eigen::VectorXd kstar(size());
        for (Eigen::Index i = 0; i < size(); ++i)
            kstar(i) = kernel(x.row(i).transpose(), xstar);
        Prediction p;
        p.mean = y_mean + kstar.dot(alpha);
        const Eigen::VectorXd v = chol.matrixL().solve(kstar);
        p.var = std::max(0.0, signal_var - v.squaredNorm());
        return p;
    }
};

// Build a surrogate at the given kernel hyperparameters and factorize it.
inline GPSurrogate make_surrogate(const Eigen::MatrixXd& points, const Eigen::VectorXd& values,
                                  double signal_var, const Eigen::VectorXd& lengthscale,
                                  double noise_var) {
    if (points.rows() < 1 || points.rows() != values.size())
        throw std::invalid_argument("make_surrogate: needs one value per point");
    if (lengthscale.size() != points.cols())
        throw std::invalid_argument("make_surrogate: one lengthscale per input dimension");
    if (!(signal_var > 0.0) || !(noise_var > 0.0) || !(lengthscale.array() > 0.0).all())
        throw std::invalid_argument("make_surrogate: kernel hyperparameters must be positive");

    GPSurrogate gp;
    gp.x = points;
    gp.y = values;
    gp.signal_var = signal_var;
    gp.lengthscale = lengthscale;
    gp.noise_var = noise_var;
    gp.y_mean = values.mean();

    const auto n = points.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            k(i, j) = k(j, i) = gp.kernel(points.row(i).transpose(), points.row(j).transpose());
    k.diagonal().array() += noise_var;
    gp.chol.compute(k);
    if (gp.chol.info() != Eigen::Success)
        throw CovarianceNotPD("make_surrogate: kernel matrix is not positive definite");
    gp.alpha = gp.chol.solve((values.array() - gp.y_mean).matrix());
    return gp;
}

inline double log_marginal_likelihood(const GPSurrogate& gp) {
    const Eigen::VectorXd centered = (gp.y.array() - gp.y_mean).matrix();
    double log_det_l = 0.0;
    for (Eigen::Index i = 0; i < gp.size(); ++i)
        log_det_l += std::log(gp.chol.matrixL()(i, i));
    return -0.5 * centered.dot(gp.alpha) - log_det_l -
           0.5 * static_cast<double>(gp.size()) * std::log(2.0 * pi);
}

struct GPConfig {
    double noise_floor = 1e-8;
    int nm_iters = 150;   // Nelder-Mead iterations per restart
    double nm_step = 0.7; // initial simplex step in log-hyperparameter units

    void validate() const {
        if (!(noise_floor > 0.0)) throw std::invalid_argument("GPConfig: noise_floor must be > 0");
        if (nm_iters < 1) throw std::invalid_argument("GPConfig: nm_iters must be >= 1");
        if (!(nm_step > 0.0)) throw std::invalid_argument("GPConfig: nm_step must be > 0");
    }
};

// Fit kernel hyperparameters by maximizing the log marginal likelihood with a
// deterministic multi-start derivative-free search over log-hyperparameters.
inline GPSurrogate gp_fit(const Eigen::MatrixXd& points, const Eigen::VectorXd& values,
                          const GPConfig& cfg = {}) {
    cfg.validate();
    if (points.rows() < 1 || points.rows() != values.size())
        throw std::invalid_argument("gp_fit: needs one value per point");
    if (!values.allFinite()) throw std::invalid_argument("gp_fit: values must be finite");
    const auto d = points.cols();

    const double mean = values.mean();
    const double var_y =
        std::max((values.array() - mean).square().sum() / static_cast<double>(values.size()),
                 1e-12);
    Eigen::VectorXd span(d);
    for (Eigen::Index i = 0; i < d; ++i)
        span(i) = std::max(points.col(i).maxCoeff() - points.col(i).minCoeff(), 1e-3);

    // theta = (log signal_var, log lengthscale_1..d, log noise_var)
    const auto unpack = [&](const Eigen::VectorXd& theta) {
        const Eigen::VectorXd clamped = theta.cwiseMax(-40.0).cwiseMin(40.0);
        const double signal = std::exp(clamped(0));
        const Eigen::VectorXd ls = clamped.segment(1, d).array().exp();
        const double noise = std::max(std::exp(clamped(d + 1)), cfg.noise_floor);
        return std::make_tuple(signal, ls, noise);
    };
    const auto objective = [&](const Eigen::VectorXd& theta) {
        try {
            const auto [signal, ls, noise] = unpack(theta);
            return -log_marginal_likelihood(make_surrogate(points, values, signal, ls, noise));
        } catch (const CovarianceNotPD&) {
            return 1e100;
        }
    };

    Eigen::VectorXd best_theta;
    double best_value = std::numeric_limits<double>::infinity();
    for (double signal_mult : {1.0, 4.0}) {
        for (double ls_frac : {0.25, 1.0}) {
            for (double noise_frac : {1e-6, 1e-2}) {
                Eigen::VectorXd theta(d + 2);
                theta(0) = std::log(signal_mult * var_y);
                theta.segment(1, d) = (ls_frac * span.array()).log();
                theta(d + 1) = std::log(noise_frac * var_y);
                const Eigen::VectorXd found =
                    detail::nelder_mead(objective, theta, cfg.nm_step, cfg.nm_iters);
                const double value = objective(found);
                if (value < best_value) {
                    best_value = value;
                    best_theta = found;
                }
            }
        }
    }
    const auto [signal, ls, noise] = unpack(best_theta);
    return make_surrogate(points, values, signal, ls, noise);
}

// Lower confidence bound: the acquisition objective minimized by propose_next.
inline double lcb(const GPSurrogate& gp, const Eigen::VectorXd& x, double kappa) {
    const auto p = gp.predict(x);
    return p.mean - kappa * std::sqrt(p.var);
}

// Minimize the LCB over the box: a deterministic quasirandom scan plus local
// simplex polish from the most promising starts.
inline Eigen::VectorXd propose_next(const GPSurrogate& gp, const ParamBox& bounds, double kappa) {
    bounds.validate();
    if (bounds.lower.size() != gp.dim())
        throw std::invalid_argument("propose_next: bounds dimension does not match the surrogate");
    if (!(kappa >= 0.0)) throw std::invalid_argument("propose_next: kappa must be >= 0");
    const auto d = gp.dim();
    const Eigen::VectorXd width = bounds.upper - bounds.lower;

    const auto objective = [&](const Eigen::VectorXd& z) { return lcb(gp, bounds.clip(z), kappa); };

    std::vector<Eigen::VectorXd> starts;
    for (int k = 0; k < 32; ++k)
        starts.push_back(bounds.lower +
                         width.cwiseProduct(detail::quasirandom_point(d, k)));
    for (Eigen::Index i = 0; i < gp.size(); ++i)
        starts.push_back(bounds.clip(gp.x.row(i).transpose()));

    std::sort(starts.begin(), starts.end(), [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return objective(a) < objective(b);
    });

    Eigen::VectorXd best = starts.front();
    double best_value = objective(best);
    const double step = 0.05 * width.minCoeff();
    for (std::size_t s = 0; s < std::min<std::size_t>(4, starts.size()); ++s) {
        const Eigen::VectorXd polished =
            bounds.clip(detail::nelder_mead(objective, starts[s], step, 120));
        const double value = objective(polished);
        if (value < best_value) {
            best_value = value;
            best = polished;
        }
    }
    return best;
}

struct GPSearchResult {
    Eigen::MatrixXd evaluated;  // budget x d, in evaluation order
    Eigen::VectorXd values;     // objective values; +inf marks failed evaluations
    Eigen::VectorXd best_x;
    double best_value = std::numeric_limits<double>::infinity();
};

// Budgeted GP minimization of a black-box objective over a box. The first
// n_init evaluations follow a deterministic space-filling sequence (whose
// first point is the box center); later points minimize the LCB of a
// surrogate refit to all previous evaluations. Non-finite objective values
// are recorded as +inf and imputed above the worst finite value for the fit,
// so a failed evaluation repels the search instead of aborting it. `snap`
// (optional) projects a candidate onto the admissible set -- e.g. rounding a
// coordinate -- and the snapped point is what gets evaluated and recorded.
inline GPSearchResult gp_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective, const ParamBox& bounds,
    int budget, int n_init, double kappa,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& snap = nullptr,
    const GPConfig& gp_cfg = {}) {
    bounds.validate();
    gp_cfg.validate();
    if (budget < 1) throw std::invalid_argument("gp_minimize: budget must be >= 1");
    if (n_init < 1) throw std::invalid_argument("gp_minimize: n_init must be >= 1");
    if (!(kappa >= 0.0)) throw std::invalid_argument("gp_minimize: kappa must be >= 0");
    const auto d = bounds.lower.size();
    const Eigen::VectorXd width = bounds.upper - bounds.lower;

    GPSearchResult result;
    result.evaluated.resize(budget, d);
    result.values.resize(budget);
    int next_fill = 0;  // index into the space-filling sequence

    for (int eval = 0; eval < budget; ++eval) {
        Eigen::VectorXd x;
        bool from_gp = false;
        if (eval >= n_init) {
            // impute failures above the worst finite value so the surrogate
            // treats them as known-bad territory
            Eigen::VectorXd y_fit = result.values.head(eval);
            std::vector<double> finite;
            for (Eigen::Index i = 0; i < y_fit.size(); ++i)
                if (std::isfinite(y_fit(i))) finite.push_back(y_fit(i));
            if (!finite.empty()) {
                const auto [lo_it, hi_it] = std::minmax_element(finite.begin(), finite.end());
                const double penalty = *hi_it + 2.0 * (*hi_it - *lo_it) + 1.0;
                for (Eigen::Index i = 0; i < y_fit.size(); ++i)
                    if (!std::isfinite(y_fit(i))) y_fit(i) = penalty;
                const GPSurrogate gp = gp_fit(result.evaluated.topRows(eval), y_fit, gp_cfg);
                x = propose_next(gp, bounds, kappa);
                from_gp = true;
            }
        }
        if (!from_gp)
            x = bounds.lower + width.cwiseProduct(detail::quasirandom_point(d, next_fill++));
        x = bounds.clip(x);
        if (snap) x = snap(x);
        result.evaluated.row(eval) = x;
        const double value = objective(x);
        result.values(eval) = std::isnan(value) ? std::numeric_limits<double>::infinity() : value;
    }

    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < result.values.size(); ++i)
        if (result.values(i) < result.values(best)) best = i;
    result.best_x = result.evaluated.row(best).transpose();
    result.best_value = result.values(best);
    return result;
}

// The (log10 learning rate, log2 batch size) search box.
inline ParamBox default_hyperopt_bounds() {
    ParamBox box;
    box.lower.resize(2);
    box.upper.resize(2);
    box.lower << -5.0, 4.0;
    box.upper << -1.0, 10.0;
    return box;
}

struct HyperoptConfig {
    std::vector<std::vector<int>> architectures = {{64, 64, 64}};  // hidden-width grid
    int budget = 12;       // trainings per architecture
    int n_init = 4;        // space-filling evaluations before the GP takes over
    double kappa = 2.0;    // LCB exploration weight
    ParamBox bounds;       // empty => default_hyperopt_bounds()
    int max_epochs = 40;   // reduced epoch cap per evaluation
    int patience = 40;
    std::uint64_t seed = 1;

    void validate() const {
        if (architectures.empty())
            throw std::invalid_argument("HyperoptConfig: needs at least one architecture");
        for (const auto& hidden : architectures) {
            if (hidden.empty() || hidden.size() > 4)
                throw std::invalid_argument(
                    "HyperoptConfig: architectures must have 1 to 4 hidden layers");
            for (int w : hidden)
                if (w < 1)
                    throw std::invalid_argument("HyperoptConfig: hidden widths must be >= 1");
        }
        if (budget < 1) throw std::invalid_argument("HyperoptConfig: budget must be >= 1");
        if (n_init < 1) throw std::invalid_argument("HyperoptConfig: n_init must be >= 1");
        if (!(kappa >= 0.0)) throw std::invalid_argument("HyperoptConfig: kappa must be >= 0");
        if (max_epochs < 1) throw std::invalid_argument("HyperoptConfig: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("HyperoptConfig: patience must be >= 1");
        if (!bounds.empty()) {
            bounds.validate();
            if (bounds.lower.size() != 2)
                throw std::invalid_argument("HyperoptConfig: bounds must be 2-d");
        }
    }
};

struct HyperoptEntry {
    std::vector<int> hidden;
    double log10_lr = 0.0;
    double log2_batch = 0.0;  // integer-valued: batch sizes are powers of two
    double learning_rate = 0.0;
    int batch_size = 0;
    double valid_mse = std::numeric_limits<double>::infinity();  // +inf: training failed
    double seconds = 0.0;
};

struct HyperoptResult {
    HyperoptEntry best;
    std::vector<HyperoptEntry> table;  // every evaluation, in order
};

// Outer loop over the architecture grid, inner GP search over the optimizer
// hyperparameters with `budget` trainings per architecture. Candidate batch
// sizes are rounded to the nearest power of two before evaluation. A training
// that diverges (non-finite loss) scores +inf and the search continues.
inline HyperoptResult optimize_hyperparams(const Dataset& ds, const HyperoptConfig& cfg = {}) {
    cfg.validate();
    if (ds.train_idx.empty() || ds.valid_idx.empty())
        throw std::invalid_argument(
            "optimize_hyperparams: dataset needs nonempty train and valid splits");
    const ParamBox bounds = cfg.bounds.empty() ? default_hyperopt_bounds() : cfg.bounds;
    const int input_dim = static_cast<int>(ds.dim());

    const auto snap = [](Eigen::VectorXd x) {
        x(1) = std::round(x(1));
        return x;
    };

    HyperoptResult result;
    std::uint64_t eval_counter = 0;
    for (const auto& hidden : cfg.architectures) {
        const auto objective = [&](const Eigen::VectorXd& h) {
            HyperoptEntry entry;
            entry.hidden = hidden;
            entry.log10_lr = h(0);
            entry.log2_batch = h(1);
            entry.learning_rate = std::pow(10.0, h(0));
            entry.batch_size = 1 << std::lround(h(1));

            TrainConfig tcfg;
            tcfg.learning_rate = entry.learning_rate;
            tcfg.batch_size = entry.batch_size;
            tcfg.max_epochs = cfg.max_epochs;
            tcfg.patience = cfg.patience;
            std::uint64_t state = cfg.seed ^ (0x9E3779B97F4A7C15ull * (eval_counter + 1));
            tcfg.seed = splitmix64(state);

            const auto t0 = std::chrono::steady_clock::now();
            try {
                RandomStream net_rng(cfg.seed, 90000 + eval_counter);
                Network net = he_init({input_dim, hidden}, net_rng);
                const TrainHistory hist = train(net, ds, tcfg);
                entry.valid_mse = hist.best_valid;
            } catch (const NonFiniteLoss&) {
                entry.valid_mse = std::numeric_limits<double>::infinity();
            }
            entry.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            ++eval_counter;
            result.table.push_back(entry);
            return entry.valid_mse;
        };
        gp_minimize(objective, bounds, cfg.budget, cfg.n_init, cfg.kappa, snap);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < result.table.size(); ++i)
        if (result.table[i].valid_mse < result.table[best].valid_mse) best = i;
    result.best = result.table[best];
    return result;
}

}  // namespace deepvol
