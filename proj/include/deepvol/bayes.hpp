#pragma once

// Bayesian inference of model parameters from implied-volatility quotes:
// a product-of-marginals prior, a liquidity-weighted heteroskedastic Gaussian
// likelihood over network-predicted vols, an affine-invariant ensemble MCMC
// sampler (stretch moves), and quantile / pairwise-histogram summaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <deepvol/errors.hpp>
#include <deepvol/math.hpp>
#include <deepvol/nn.hpp>
#include <deepvol/quotes.hpp>
#include <deepvol/rng.hpp>
#include <deepvol/sampling.hpp>

namespace deepvol {

// Prior over the model parameters: independent marginals, density zero
// outside each marginal's support box.
struct PriorSpec {
    std::vector<MarginalSpec> marginals;

    int dim() const { return static_cast<int>(marginals.size()); }

    void validate() const {
        if (marginals.empty()) throw std::invalid_argument("PriorSpec: needs at least one marginal");
        for (const auto& m : marginals) m.validate();
    }

    bool contains(const Eigen::VectorXd& mu) const {
        if (mu.size() != static_cast<Eigen::Index>(marginals.size())) return false;
        for (std::size_t i = 0; i < marginals.size(); ++i) {
            const double x = mu(static_cast<Eigen::Index>(i));
            if (x < marginals[i].support_lo() || x > marginals[i].support_hi()) return false;
        }
        return true;
    }

    // log p(mu); -infinity outside the support box.
    double log_density(const Eigen::VectorXd& mu) const {
        if (mu.size() != static_cast<Eigen::Index>(marginals.size()))
            throw std::invalid_argument("PriorSpec: parameter vector has wrong dimension");
        double total = 0.0;
        for (std::size_t i = 0; i < marginals.size(); ++i) {
            total += marginal_log_density(marginals[i], mu(static_cast<Eigen::Index>(i)));
            if (total == -std::numeric_limits<double>::infinity()) return total;
        }
        return total;
    }

    Eigen::VectorXd sample(RandomStream& rng) const {
        Eigen::VectorXd mu(static_cast<Eigen::Index>(marginals.size()));
        for (std::size_t i = 0; i < marginals.size(); ++i)
            mu(static_cast<Eigen::Index>(i)) = sample_marginal(marginals[i], rng);
        return mu;
    }
};

// The sampling priors of the model, packaged as a PriorSpec.
inline PriorSpec default_prior(ModelKind model) {
    return {model == ModelKind::heston ? heston_priors() : rbergomi_priors()};
}

// Observation model: y_i = net(mu, M_i, T_i) + eps_i with independent
// eps_i ~ N(0, sigma_i^2), and nonnegative per-quote weights that temper each
// term's precision (normalized to mean one inside log_posterior).
struct LikelihoodSpec {
    std::vector<IVQuote> quotes;
    Eigen::VectorXd sigma;    // per-quote noise scale, > 0
    Eigen::VectorXd weights;  // per-quote weight, >= 0, at least one positive

    void validate() const {
        const auto n = static_cast<Eigen::Index>(quotes.size());
        if (n < 1) throw std::invalid_argument("LikelihoodSpec: needs at least one quote");
        if (sigma.size() != n || weights.size() != n)
            throw std::invalid_argument(
                "LikelihoodSpec: sigma and weights must have one entry per quote");
        for (const auto& q : quotes) q.validate();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(std::isfinite(sigma(i)) && sigma(i) > 0.0))
                throw std::invalid_argument("LikelihoodSpec: every sigma_i must be positive");
            if (!(std::isfinite(weights(i)) && weights(i) >= 0.0))
                throw std::invalid_argument("LikelihoodSpec: weights must be nonnegative");
        }
        if (!(weights.mean() > 0.0))
            throw std::invalid_argument("LikelihoodSpec: at least one weight must be positive");
    }
};

// Default observation model from market quotes: noise scale = half the
// bid-ask spread, weight = mid/(ask - mid).
inline LikelihoodSpec likelihood_from_quotes(const std::vector<IVQuote>& quotes) {
    LikelihoodSpec like;
    like.quotes = quotes;
    const auto n = static_cast<Eigen::Index>(quotes.size());
    like.sigma.resize(n);
    like.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        like.sigma(i) = quotes[static_cast<std::size_t>(i)].noise_sigma();
        like.weights(i) = quotes[static_cast<std::size_t>(i)].weight();
    }
    like.validate();
    return like;
}

// Unweighted observation model with one shared noise scale; for synthetic
// surfaces where no bid-ask spreads exist.
inline LikelihoodSpec likelihood_with_constant_noise(const std::vector<IVQuote>& quotes,
                                                     double sigma) {
    LikelihoodSpec like;
    like.quotes = quotes;
    const auto n = static_cast<Eigen::Index>(quotes.size());
    like.sigma = Eigen::VectorXd::Constant(n, sigma);
    like.weights = Eigen::VectorXd::Ones(n);
    like.validate();
    return like;
}

// log p(mu | y) up to the model-evidence constant: log prior plus the sum of
// per-quote Gaussian log densities with variance sigma_i^2 / w~_i, where w~ is
// the weight vector normalized to mean one (so the likelihood temperature does
// not depend on the overall weight scale). Terms with w~_i == 0 carry no
// information and are omitted. Returns -infinity outside the prior support.
inline double log_posterior(const Eigen::VectorXd& mu, const PriorSpec& prior,
                            const LikelihoodSpec& like, const Network& net) {
    const double log_prior = prior.log_density(mu);
    if (log_prior == -std::numeric_limits<double>::infinity()) return log_prior;

    const auto m = mu.size();
    const double mean_weight = like.weights.mean();
    Eigen::VectorXd x(m + 2);
    x.head(m) = mu;
    double log_like = 0.0;
    for (std::size_t i = 0; i < like.quotes.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double w = like.weights(k) / mean_weight;
        if (w == 0.0) continue;
        x(m) = like.quotes[i].coord.M;
        x(m + 1) = like.quotes[i].coord.T;
        const double resid = forward_one(net, x) - like.quotes[i].mid();
        const double var = like.sigma(k) * like.sigma(k) / w;
        log_like += -0.5 * std::log(2.0 * pi * var) - 0.5 * resid * resid / var;
    }
    return log_prior + log_like;
}

// One MCMC run: n_steps snapshots of an n_walkers ensemble in dim dimensions.
struct PosteriorChain {
    int n_walkers = 0;
    int n_steps = 0;
    int dim = 0;
    // Row step * n_walkers + walker holds that walker's position after the
    // given step (both half-ensembles updated).
    Eigen::MatrixXd draws;
    Eigen::VectorXd acceptance_rate;  // accepted proposals / n_steps, per walker

    void validate() const {
        if (n_walkers < 2 || n_steps < 1 || dim < 1)
            throw std::invalid_argument("PosteriorChain: empty chain");
        if (draws.rows() != static_cast<Eigen::Index>(n_steps) * n_walkers || draws.cols() != dim)
            throw std::invalid_argument("PosteriorChain: draws have the wrong shape");
        if (acceptance_rate.size() != n_walkers)
            throw std::invalid_argument("PosteriorChain: needs one acceptance rate per walker");
    }

    // First quarter of the steps, discarded by the summaries.
    int burn_in() const { return n_steps / 4; }

    // Pooled draws from the steps after burn-in.
    Eigen::MatrixXd post_burn_in() const {
        const int keep = n_steps - burn_in();
        return draws.bottomRows(static_cast<Eigen::Index>(keep) * n_walkers);
    }
};

using LogTargetFn = std::function<double(const Eigen::VectorXd&)>;
using WalkerInitFn = std::function<Eigen::VectorXd(RandomStream&)>;

namespace detail {

// Evaluate the log target at each position, NaN mapped to -infinity so a
// misbehaving model point is rejected rather than poisoning the accept rule.
// Positions within one half-ensemble are independent, so large batches fan
// out across hardware threads; results land by index, keeping runs
// deterministic regardless of scheduling.
inline void eval_log_target_batch(const LogTargetFn& log_target,
                                  const std::vector<Eigen::VectorXd>& positions,
                                  std::vector<double>& out) {
    const std::size_t n = positions.size();
    out.resize(n);
    const auto eval_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double value = log_target(positions[i]);
            out[i] = std::isnan(value) ? -std::numeric_limits<double>::infinity() : value;
        }
    };
    const unsigned hw = std::thread::hardware_concurrency();
    if (n < 8 || hw <= 1) {
        eval_range(0, n);
        return;
    }
    const std::size_t n_tasks = std::min<std::size_t>(hw, n);
    std::vector<std::future<void>> tasks;
    tasks.reserve(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
        const std::size_t begin = n * t / n_tasks;
        const std::size_t end = n * (t + 1) / n_tasks;
        tasks.push_back(std::async(std::launch::async, eval_range, begin, end));
    }
    for (auto& task : tasks) task.get();
}

}  // namespace detail

// Affine-invariant ensemble sampler with stretch moves. Each step updates the
// two half-ensembles in turn: every walker in one half proposes
// Y = X_j + z (X_k - X_j) against a partner X_j drawn from the frozen other
// half, with z ~ g(z) proportional to 1/sqrt(z) on [1/a, a], accepted with
// probability min(1, z^(dim-1) target(Y)/target(X_k)). All randomness comes
// from one sequential stream, so a run is a pure function of the seed.
//
// Throws AllWalkersStuck when the ensemble's acceptance over the most recent
// 100 steps falls below 1%.
inline PosteriorChain run_ensemble(const LogTargetFn& log_target, const WalkerInitFn& init,
                                   int n_walkers, int n_steps, std::uint64_t seed,
                                   double stretch_a = 2.0) {
    if (n_walkers < 2) throw std::invalid_argument("run_ensemble: needs at least two walkers");
    if (n_steps < 1) throw std::invalid_argument("run_ensemble: needs at least one step");
    if (!(stretch_a > 1.0)) throw std::invalid_argument("run_ensemble: stretch scale must be > 1");

    RandomStream rng(seed, 0);
    std::vector<Eigen::VectorXd> position(static_cast<std::size_t>(n_walkers));
    std::vector<double> log_prob;
    Eigen::Index dim = 0;
    for (int w = 0; w < n_walkers; ++w) {
        position[static_cast<std::size_t>(w)] = init(rng);
        if (w == 0)
            dim = position[0].size();
        else if (position[static_cast<std::size_t>(w)].size() != dim)
            throw std::invalid_argument("run_ensemble: init draws disagree on dimension");
    }
    if (dim < 1) throw std::invalid_argument("run_ensemble: init draws must be nonempty");
    if (n_walkers < 2 * dim)
        throw std::invalid_argument("run_ensemble: needs n_walkers >= 2 * dim (" +
                                    std::to_string(n_walkers) + " walkers for dimension " +
                                    std::to_string(dim) + ")");
    detail::eval_log_target_batch(log_target, position, log_prob);

    PosteriorChain chain;
    chain.n_walkers = n_walkers;
    chain.n_steps = n_steps;
    chain.dim = static_cast<int>(dim);
    chain.draws.resize(static_cast<Eigen::Index>(n_steps) * n_walkers, dim);
    chain.acceptance_rate = Eigen::VectorXd::Zero(n_walkers);

    const int half = n_walkers / 2;
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<Eigen::VectorXd> proposal;
    std::vector<double> proposal_log_prob, log_z, log_u;
    std::vector<int> mover;
    long window_accepted = 0;

    for (int step = 0; step < n_steps; ++step) {
        // [0, half) first, then [half, n_walkers); partners come from the
        // other block's current (already possibly updated) positions.
        for (int block = 0; block < 2; ++block) {
            const int begin = block == 0 ? 0 : half;
            const int end = block == 0 ? half : n_walkers;
            const int other_begin = block == 0 ? half : 0;
            const int other_size = block == 0 ? n_walkers - half : half;
            proposal.clear();
            proposal_log_prob.clear();
            log_z.clear();
            log_u.clear();
            mover.clear();
            for (int k = begin; k < end; ++k) {
                const double grow = (stretch_a - 1.0) * rng.uniform() + 1.0;
                const double z = grow * grow / stretch_a;
                const int j = other_begin +
                              std::min(other_size - 1,
                                       static_cast<int>(rng.uniform() * other_size));
                const auto& x_k = position[static_cast<std::size_t>(k)];
                const auto& x_j = position[static_cast<std::size_t>(j)];
                proposal.push_back(x_j + z * (x_k - x_j));
                log_z.push_back(std::log(z));
                log_u.push_back(std::log(rng.uniform()));
                mover.push_back(k);
            }
            detail::eval_log_target_batch(log_target, proposal, proposal_log_prob);
            for (std::size_t p = 0; p < proposal.size(); ++p) {
                if (proposal_log_prob[p] == neg_inf) continue;
                const int k = mover[p];
                const double log_accept = static_cast<double>(dim - 1) * log_z[p] +
                                          proposal_log_prob[p] -
                                          log_prob[static_cast<std::size_t>(k)];
                if (log_u[p] < log_accept) {
                    position[static_cast<std::size_t>(k)] = std::move(proposal[p]);
                    log_prob[static_cast<std::size_t>(k)] = proposal_log_prob[p];
                    chain.acceptance_rate(k) += 1.0;
                    ++window_accepted;
                }
            }
        }
        for (int w = 0; w < n_walkers; ++w)
            chain.draws.row(static_cast<Eigen::Index>(step) * n_walkers + w) =
                position[static_cast<std::size_t>(w)];
        if ((step + 1) % 100 == 0) {
            if (window_accepted < 0.01 * 100.0 * n_walkers)
                throw AllWalkersStuck("ensemble acceptance fell below 1% over the last 100 steps (" +
                                      std::to_string(window_accepted) + " accepted of " +
                                      std::to_string(100L * n_walkers) + " proposals)");
            window_accepted = 0;
        }
    }
    chain.acceptance_rate /= static_cast<double>(n_steps);
    return chain;
}

// Posterior sampling: walkers start from prior draws and target
// log_posterior(mu, prior, like, net). Deterministic given the seed.
inline PosteriorChain run_mcmc(const PriorSpec& prior, const LikelihoodSpec& like,
                               const Network& net, int n_walkers, int n_steps,
                               std::uint64_t seed) {
    prior.validate();
    like.validate();
    net.validate();
    const int m = prior.dim();
    if (static_cast<int>(net.spec.input_dim) != m + 2)
        throw std::invalid_argument("run_mcmc: network input dimension " +
                                    std::to_string(net.spec.input_dim) + " does not match " +
                                    std::to_string(m) + " parameters plus (M, T)");
    if (n_walkers < 2 * m)
        throw std::invalid_argument("run_mcmc: needs n_walkers >= 2 * dim (" +
                                    std::to_string(n_walkers) + " walkers for dimension " +
                                    std::to_string(m) + ")");
    const auto target = [&](const Eigen::VectorXd& mu) {
        return log_posterior(mu, prior, like, net);
    };
    const auto init = [&](RandomStream& r) { return prior.sample(r); };
    return run_ensemble(target, init, n_walkers, n_steps, seed);
}

struct ParamSummary {
    double median = 0.0;
    double q025 = 0.0;
    double q975 = 0.0;
};

// Binned 2-d projection of the pooled post-burn-in draws onto parameters
// (i, j); counts(a, b) is the number of draws with component i in x bin a and
// component j in y bin b.
struct PairHistogram {
    int i = 0;
    int j = 0;
    std::vector<double> x_edges, y_edges;  // bins + 1 entries each
    Eigen::MatrixXd counts;                // bins x bins
};

struct ChainSummary {
    std::vector<ParamSummary> params;
    std::vector<PairHistogram> pairs;  // one per parameter pair i < j
};

namespace detail {

inline std::vector<double> histogram_edges(const Eigen::VectorXd& values, int bins) {
    double lo = values.minCoeff();
    double hi = values.maxCoeff();
    if (!(hi > lo)) {  // degenerate (constant) sample: give it one real-width bin
        lo -= 0.5;
        hi += 0.5;
    }
    std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
    for (int e = 0; e <= bins; ++e)
        edges[static_cast<std::size_t>(e)] = lo + (hi - lo) * e / bins;
    return edges;
}

inline int histogram_bin(double x, const std::vector<double>& edges) {
    const int bins = static_cast<int>(edges.size()) - 1;
    const double lo = edges.front(), hi = edges.back();
    const int raw = static_cast<int>((x - lo) / (hi - lo) * bins);
    return std::clamp(raw, 0, bins - 1);
}

}  // namespace detail

// Per-parameter median and [2.5%, 97.5%] quantiles of the pooled post-burn-in
// draws, plus one 2-d histogram per parameter pair.
inline ChainSummary summarize(const PosteriorChain& chain, int bins = 30) {
    chain.validate();
    if (bins < 1) throw std::invalid_argument("summarize: needs at least one bin");
    const Eigen::MatrixXd pooled = chain.post_burn_in();
    const auto n = pooled.rows();

    ChainSummary summary;
    summary.params.reserve(static_cast<std::size_t>(chain.dim));
    for (int d = 0; d < chain.dim; ++d) {
        std::vector<double> values(pooled.col(d).data(), pooled.col(d).data() + n);
        std::sort(values.begin(), values.end());
        summary.params.push_back({quantile_sorted(values, 0.5), quantile_sorted(values, 0.025),
                                  quantile_sorted(values, 0.975)});
    }
    for (int i = 0; i < chain.dim; ++i) {
        for (int j = i + 1; j < chain.dim; ++j) {
            PairHistogram hist;
            hist.i = i;
            hist.j = j;
            hist.x_edges = detail::histogram_edges(pooled.col(i), bins);
            hist.y_edges = detail::histogram_edges(pooled.col(j), bins);
            hist.counts = Eigen::MatrixXd::Zero(bins, bins);
            for (Eigen::Index r = 0; r < n; ++r)
                hist.counts(detail::histogram_bin(pooled(r, i), hist.x_edges),
                            detail::histogram_bin(pooled(r, j), hist.y_edges)) += 1.0;
            summary.pairs.push_back(std::move(hist));
        }
    }
    return summary;
}

}  // namespace deepvol
