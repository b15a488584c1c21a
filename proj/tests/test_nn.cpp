// Tests for the fully-connected ReLU network: initialization, forward
// evaluation, gradient correctness against finite differences, Adam,
// training with early stopping, input Jacobians, and serialization.

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <deepvol/dataset.hpp>
#include <deepvol/nn.hpp>

namespace dv = deepvol;

namespace {

// A small synthetic regression dataset with the exact target y = 2x + 1.
dv::Dataset linear_dataset(std::size_t n, std::uint64_t seed) {
    dv::Dataset ds;
    ds.model = dv::ModelKind::heston;
    ds.column_names = {"x"};
    ds.inputs.resize(static_cast<Eigen::Index>(n), 1);
    ds.outputs.resize(static_cast<Eigen::Index>(n));
    dv::RandomStream rng(seed, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        ds.inputs(static_cast<Eigen::Index>(i), 0) = x;
        ds.outputs(static_cast<Eigen::Index>(i)) = 2.0 * x + 1.0;
    }
    const std::size_t ntr = n * 9 / 10, nva = n / 20;
    for (std::size_t i = 0; i < ntr; ++i) ds.train_idx.push_back(i);
    for (std::size_t i = ntr; i < ntr + nva; ++i) ds.valid_idx.push_back(i);
    for (std::size_t i = ntr + nva; i < n; ++i) ds.test_idx.push_back(i);
    double m = 0.0, m2 = 0.0;
    for (std::size_t i : ds.train_idx) m += ds.inputs(static_cast<Eigen::Index>(i), 0);
    m /= static_cast<double>(ntr);
    for (std::size_t i : ds.train_idx) {
        const double d = ds.inputs(static_cast<Eigen::Index>(i), 0) - m;
        m2 += d * d;
    }
    ds.mean = Eigen::VectorXd::Constant(1, m);
    ds.stdev = Eigen::VectorXd::Constant(1, std::sqrt(m2 / static_cast<double>(ntr)));
    ds.n_requested = n;
    ds.seed = seed;
    return ds;
}

dv::Network random_net(const dv::NetworkSpec& spec, std::uint64_t seed) {
    dv::RandomStream rng(seed, 0);
    return dv::he_init(spec, rng);
}

// Smallest absolute hidden pre-activation over the whole batch; points where
// this is tiny sit on a ReLU kink and are excluded from difference tests.
double min_preactivation_gap(const dv::Network& net, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd a = dv::detail::standardize_batch(net, x);
    double gap = std::numeric_limits<double>::infinity();
    for (int l = 0; l + 1 < net.spec.n_layers(); ++l) {
        const auto ul = static_cast<std::size_t>(l);
        Eigen::MatrixXd z = a * net.weights[ul].transpose();
        z.rowwise() += net.biases[ul].transpose();
        gap = std::min(gap, z.array().abs().minCoeff());
        a = z.cwiseMax(0.0);
    }
    return gap;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("deepvol_nn_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

// --- Initialization ---------------------------------------------------------

TEST(NnInit, ShapesChainAndBiasesAreZero) {
    const dv::NetworkSpec spec{7, {64, 32, 16}};
    dv::Network net = random_net(spec, 11);
    net.validate();
    ASSERT_EQ(net.weights.size(), 4u);
    EXPECT_EQ(net.weights[0].rows(), 64);
    EXPECT_EQ(net.weights[0].cols(), 7);
    EXPECT_EQ(net.weights[1].rows(), 32);
    EXPECT_EQ(net.weights[1].cols(), 64);
    EXPECT_EQ(net.weights[2].rows(), 16);
    EXPECT_EQ(net.weights[2].cols(), 32);
    EXPECT_EQ(net.weights[3].rows(), 1);
    EXPECT_EQ(net.weights[3].cols(), 16);
    for (const auto& b : net.biases) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(net.mean.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(net.stdev.minCoeff(), 1.0);
}

TEST(NnInit, WeightVarianceMatchesFanIn) {
    // A layer fed by 4096 nodes should carry weight variance 2/4096.
    const dv::NetworkSpec spec{4096, {8}};
    dv::Network net = random_net(spec, 21);
    const auto& W = net.weights[0];
    const double mean = W.mean();
    const double var = (W.array() - mean).square().sum() / static_cast<double>(W.size() - 1);
    const double target = 2.0 / 4096.0;
    EXPECT_NEAR(var, target, 0.10 * target);
    EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(target / static_cast<double>(W.size())));
}

TEST(NnInit, SameSeedReproducesNetwork) {
    const dv::NetworkSpec spec{3, {8, 8}};
    dv::Network a = random_net(spec, 5), b = random_net(spec, 5), c = random_net(spec, 6);
    for (std::size_t l = 0; l < a.weights.size(); ++l)
        EXPECT_TRUE(a.weights[l] == b.weights[l]);
    EXPECT_FALSE(a.weights[0] == c.weights[0]);
}

TEST(NnInit, RejectsInvalidSpecs) {
    dv::RandomStream rng(1, 0);
    EXPECT_THROW(dv::he_init({0, {8}}, rng), std::invalid_argument);
    EXPECT_THROW(dv::he_init({3, {}}, rng), std::invalid_argument);
    EXPECT_THROW(dv::he_init({3, {8, 0}}, rng), std::invalid_argument);
}

// --- Forward ----------------------------------------------------------------

TEST(NnForward, ZeroWeightsGiveOutputBias) {
    dv::Network net = random_net({4, {8, 8}}, 3);
    for (auto& W : net.weights) W.setZero();
    net.biases.back()(0) = 0.7;
    dv::RandomStream rng(9, 0);
    for (int k = 0; k < 5; ++k) {
        Eigen::VectorXd x(4);
        for (int i = 0; i < 4; ++i) x(i) = rng.uniform(-10.0, 10.0);
        EXPECT_EQ(dv::forward_one(net, x), 0.7);
    }
}

TEST(NnForward, SingleNodeActsAsRelu) {
    dv::Network net = random_net({1, {1}}, 1);
    net.weights[0](0, 0) = 1.0;
    net.weights[1](0, 0) = 1.0;
    net.biases[0](0) = 0.0;
    net.biases[1](0) = 0.0;
    EXPECT_EQ(dv::forward_one(net, Eigen::VectorXd::Constant(1, -3.0)), 0.0);
    EXPECT_EQ(dv::forward_one(net, Eigen::VectorXd::Constant(1, 2.0)), 2.0);
}

TEST(NnForward, BatchMatchesSingleCallsBitwise) {
    dv::Network net = random_net({7, {64, 64, 64}}, 13);
    dv::RandomStream rng(14, 0);
    for (Eigen::Index i = 0; i < 7; ++i) {
        net.mean(i) = rng.uniform(-1.0, 1.0);
        net.stdev(i) = rng.uniform(0.5, 2.0);
    }
    Eigen::MatrixXd x(50, 7);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.uniform(-2.0, 2.0);
    const Eigen::VectorXd y = dv::forward(net, x);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        EXPECT_EQ(y(r), dv::forward_one(net, x.row(r).transpose()));
    // A sub-batch evaluates its rows identically too.
    const Eigen::VectorXd y3 = dv::forward(net, x.topRows(3));
    for (Eigen::Index r = 0; r < 3; ++r) EXPECT_EQ(y3(r), y(r));
}

TEST(NnForward, RejectsDimensionMismatch) {
    dv::Network net = random_net({4, {8}}, 2);
    EXPECT_THROW(dv::forward(net, Eigen::MatrixXd::Zero(3, 5)), std::invalid_argument);
}

TEST(NnForward, PiecewiseLinearAlongRandomDirections) {
    // Between activation-pattern changes the map t -> f(x + t u) is affine:
    // interior second differences vanish on every constant-pattern run.
    dv::Network net = random_net({5, {16, 16}}, 31);
    dv::RandomStream rng(32, 0);
    auto pattern_hash = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd a = (x - net.mean).cwiseQuotient(net.stdev);
        std::size_t h = 0;
        for (int l = 0; l + 1 < net.spec.n_layers(); ++l) {
            const auto ul = static_cast<std::size_t>(l);
            Eigen::VectorXd z = net.weights[ul] * a + net.biases[ul];
            for (Eigen::Index i = 0; i < z.size(); ++i) h = h * 2 + (z(i) > 0.0 ? 1 : 0);
            a = z.cwiseMax(0.0);
        }
        return h;
    };
    for (int rep = 0; rep < 3; ++rep) {
        Eigen::VectorXd x0(5), u(5);
        for (int i = 0; i < 5; ++i) {
            x0(i) = rng.uniform(-1.0, 1.0);
            u(i) = rng.normal();
        }
        const int grid = 401;
        std::vector<double> f(grid);
        std::vector<std::size_t> pat(grid);
        for (int k = 0; k < grid; ++k) {
            const Eigen::VectorXd x = x0 + (static_cast<double>(k) / (grid - 1)) * u;
            f[static_cast<std::size_t>(k)] = dv::forward_one(net, x);
            pat[static_cast<std::size_t>(k)] = pattern_hash(x);
        }
        int checked = 0;
        for (int k = 1; k + 1 < grid; ++k) {
            if (pat[static_cast<std::size_t>(k - 1)] != pat[static_cast<std::size_t>(k)] ||
                pat[static_cast<std::size_t>(k)] != pat[static_cast<std::size_t>(k + 1)])
                continue;
            const double second_diff = f[static_cast<std::size_t>(k - 1)] -
                                       2.0 * f[static_cast<std::size_t>(k)] +
                                       f[static_cast<std::size_t>(k + 1)];
            EXPECT_LT(std::abs(second_diff), 1e-11);
            ++checked;
        }
        EXPECT_GT(checked, 100);
    }
}

// --- Gradients --------------------------------------------------------------

TEST(NnGrads, BackpropMatchesFiniteDifferences) {
    // Desk-sized network, ten random kink-free points, every parameter
    // checked against a central difference on the loss.
    const dv::NetworkSpec spec{7, {64, 64, 64}};
    dv::Network net = random_net(spec, 41);
    dv::RandomStream rng(42, 0);
    int points_done = 0;
    while (points_done < 10) {
        Eigen::MatrixXd x(1, 7);
        for (int c = 0; c < 7; ++c) x(0, c) = rng.uniform(-1.5, 1.5);
        if (min_preactivation_gap(net, x) < 1e-3) continue;
        ++points_done;
        Eigen::VectorXd y(1);
        y(0) = dv::forward(net, x)(0) + 0.3;  // nonzero residual

        auto [mse, grads] = dv::loss_and_grads(net, x, y);
        EXPECT_NEAR(mse, 0.09, 1e-12);

        // Forward-only loss for the difference quotient (no gradient work).
        auto mse_only = [&]() {
            const Eigen::VectorXd p = dv::forward(net, x);
            return (p - y).squaredNorm() / static_cast<double>(p.size());
        };
        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            auto check = [&](double& p, double analytic) {
                const double save = p;
                p = save + h;
                const double up = mse_only();
                p = save - h;
                const double dn = mse_only();
                p = save;
                const double fd = (up - dn) / (2.0 * h);
                const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-10});
                worst = std::max(worst, std::abs(fd - analytic) / scale);
            };
            for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
                for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
                    check(net.weights[l](i, j), grads.w[l](i, j));
            for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
                check(net.biases[l](i), grads.b[l](i));
        }
        EXPECT_LT(worst, 1e-5);
    }
}

TEST(NnGrads, PerfectFitHasZeroLossAndGradients) {
    dv::Network net = random_net({3, {8, 8}}, 51);
    dv::RandomStream rng(52, 0);
    Eigen::MatrixXd x(6, 3);
    for (Eigen::Index r = 0; r < 6; ++r)
        for (Eigen::Index c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd y = dv::forward(net, x);
    auto [mse, grads] = dv::loss_and_grads(net, x, y);
    EXPECT_EQ(mse, 0.0);
    for (std::size_t l = 0; l < grads.w.size(); ++l) {
        EXPECT_EQ(grads.w[l].cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(grads.b[l].cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(NnGrads, DoublingResidualsQuadruplesLoss) {
    dv::Network net = random_net({3, {8}}, 61);
    dv::RandomStream rng(62, 0);
    Eigen::MatrixXd x(10, 3);
    Eigen::VectorXd r(10);
    for (Eigen::Index i = 0; i < 10; ++i) {
        for (Eigen::Index c = 0; c < 3; ++c) x(i, c) = rng.uniform(-1.0, 1.0);
        r(i) = rng.normal();
    }
    const Eigen::VectorXd y = dv::forward(net, x);
    const double m1 = dv::loss_and_grads(net, x, y - r).first;
    const double m2 = dv::loss_and_grads(net, x, y - 2.0 * r).first;
    EXPECT_NEAR(m2, 4.0 * m1, 1e-12 * m2);
}

TEST(NnGrads, InputJacobianMatchesFiniteDifferences) {
    dv::Network net = random_net({5, {32, 32}}, 71);
    dv::RandomStream rng(72, 0);
    for (Eigen::Index i = 0; i < 5; ++i) {
        net.mean(i) = rng.uniform(-0.5, 0.5);
        net.stdev(i) = rng.uniform(0.5, 2.0);
    }
    int points_done = 0;
    while (points_done < 10) {
        Eigen::MatrixXd x(1, 5);
        for (int c = 0; c < 5; ++c) x(0, c) = rng.uniform(-1.0, 1.0);
        if (min_preactivation_gap(net, x) < 1e-3) continue;
        ++points_done;
        const Eigen::VectorXd jac = dv::input_jacobian(net, x.row(0).transpose());
        for (int c = 0; c < 5; ++c) {
            const double h = 1e-5 * net.stdev(c);
            Eigen::VectorXd xp = x.row(0).transpose(), xm = xp;
            xp(c) += h;
            xm(c) -= h;
            const double fd = (dv::forward_one(net, xp) - dv::forward_one(net, xm)) / (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(jac(c)), 1e-10});
            EXPECT_LT(std::abs(fd - jac(c)) / scale, 1e-6);
        }
    }
}

TEST(NnGrads, ZeroHiddenWeightsGiveZeroJacobian) {
    dv::Network net = random_net({4, {8}}, 81);
    net.weights[0].setZero();
    const Eigen::VectorXd jac = dv::input_jacobian(net, Eigen::VectorXd::Constant(4, 0.3));
    EXPECT_EQ(jac.cwiseAbs().maxCoeff(), 0.0);
}

TEST(NnGrads, JacobianInvariantUnderAbsorbedRescaling) {
    // Doubling the standardization scale while doubling the first-layer
    // weights leaves the function -- and hence the raw-input Jacobian --
    // unchanged (powers of two keep the arithmetic exact).
    dv::Network net = random_net({4, {16, 16}}, 91);
    dv::RandomStream rng(92, 0);
    for (Eigen::Index i = 0; i < 4; ++i) net.mean(i) = rng.uniform(-0.5, 0.5);
    dv::Network scaled = net;
    scaled.stdev *= 2.0;
    scaled.weights[0] *= 2.0;
    for (int k = 0; k < 5; ++k) {
        Eigen::VectorXd x(4);
        for (int i = 0; i < 4; ++i) x(i) = rng.uniform(-1.0, 1.0);
        EXPECT_EQ(dv::forward_one(net, x), dv::forward_one(scaled, x));
        const Eigen::VectorXd j1 = dv::input_jacobian(net, x);
        const Eigen::VectorXd j2 = dv::input_jacobian(scaled, x);
        for (int i = 0; i < 4; ++i) EXPECT_EQ(j1(i), j2(i));
    }
}

// --- Adam -------------------------------------------------------------------

TEST(NnAdam, FirstStepMovesBySignedLearningRate) {
    dv::Network net = random_net({2, {4}}, 101);
    const dv::Network before = net;
    dv::AdamState st = dv::AdamState::init(net);
    dv::ParamBlock g = dv::ParamBlock::zeros_like(net);
    dv::RandomStream rng(102, 0);
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        for (Eigen::Index i = 0; i < g.w[l].size(); ++i)
            *(g.w[l].data() + i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.01, 5.0);
        for (Eigen::Index i = 0; i < g.b[l].size(); ++i)
            g.b[l](i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.01, 5.0);
    }
    const double lr = 1e-3;
    dv::adam_step(net, st, g, lr);
    for (std::size_t l = 0; l < g.w.size(); ++l)
        for (Eigen::Index i = 0; i < g.w[l].size(); ++i) {
            const double delta = *(net.weights[l].data() + i) - *(before.weights[l].data() + i);
            EXPECT_LT(delta * *(g.w[l].data() + i), 0.0);  // moves against the gradient
            EXPECT_GE(std::abs(delta), 0.99 * lr);
            EXPECT_LE(std::abs(delta), lr);
        }
    EXPECT_EQ(st.t, 1);
}

TEST(NnAdam, ZeroGradientIsAFixedPoint) {
    dv::Network net = random_net({2, {4}}, 111);
    const dv::Network before = net;
    dv::AdamState st = dv::AdamState::init(net);
    const dv::ParamBlock g = dv::ParamBlock::zeros_like(net);
    for (int k = 0; k < 7; ++k) dv::adam_step(net, st, g, 0.1);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        EXPECT_TRUE(net.weights[l] == before.weights[l]);
        EXPECT_TRUE(net.biases[l] == before.biases[l]);
    }
}

TEST(NnAdam, IdenticalInputsGiveIdenticalTrajectories) {
    dv::Network n1 = random_net({3, {8}}, 121), n2 = n1;
    dv::AdamState s1 = dv::AdamState::init(n1), s2 = dv::AdamState::init(n2);
    dv::RandomStream rng(122, 0);
    Eigen::MatrixXd x(16, 3);
    Eigen::VectorXd y(16);
    for (Eigen::Index r = 0; r < 16; ++r) {
        for (Eigen::Index c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
        y(r) = rng.normal();
    }
    for (int k = 0; k < 20; ++k) {
        dv::adam_step(n1, s1, dv::loss_and_grads(n1, x, y).second, 3e-3);
        dv::adam_step(n2, s2, dv::loss_and_grads(n2, x, y).second, 3e-3);
    }
    for (std::size_t l = 0; l < n1.weights.size(); ++l) {
        EXPECT_TRUE(n1.weights[l] == n2.weights[l]);
        EXPECT_TRUE(n1.biases[l] == n2.biases[l]);
    }
}

// --- Training ---------------------------------------------------------------

TEST(NnTrain, LinearTargetReachesTinyValidationError) {
    // y = 2x + 1 is exactly representable, so optimization should drive the
    // validation error below 1e-4 well within 200 epochs (a fresh run of
    // this configuration reaches ~2e-6).
    dv::Dataset ds = linear_dataset(1000, 42);
    dv::Network net = random_net({1, {8}}, 7);
    dv::TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 32;
    cfg.max_epochs = 200;
    cfg.patience = 1000;
    cfg.seed = 3;
    const dv::TrainHistory hist = dv::train(net, ds, cfg);
    EXPECT_LT(hist.best_valid, 1e-4);
    EXPECT_LE(hist.epochs_run, 200);
}

TEST(NnTrain, ReturnsBestSnapshotAndArgminBookkeeping) {
    dv::Dataset ds = linear_dataset(600, 55);
    dv::Network net = random_net({1, {6}}, 8);
    dv::TrainConfig cfg;
    cfg.learning_rate = 0.02;
    cfg.batch_size = 64;
    cfg.max_epochs = 60;
    cfg.patience = 1000;
    cfg.seed = 4;
    const dv::TrainHistory hist = dv::train(net, ds, cfg);

    ASSERT_FALSE(hist.evals.empty());
    double running_best = std::numeric_limits<double>::infinity();
    double min_valid = std::numeric_limits<double>::infinity();
    for (const auto& ev : hist.evals) {
        EXPECT_EQ(ev.improved, ev.valid_mse < running_best);
        running_best = std::min(running_best, ev.valid_mse);  // nonincreasing best sequence
        min_valid = std::min(min_valid, ev.valid_mse);
    }
    EXPECT_EQ(hist.best_valid, min_valid);

    // The returned parameters reproduce the best recorded validation error.
    const Eigen::MatrixXd xv = ds.standardized(ds.valid_idx);
    const Eigen::VectorXd yv = ds.gather_outputs(ds.valid_idx);
    const Eigen::VectorXd pred = dv::detail::forward_standardized(net, xv);
    const double recomputed = (pred - yv).squaredNorm() / static_cast<double>(yv.size());
    EXPECT_EQ(recomputed, hist.best_valid);
}

TEST(NnTrain, EarlyStoppingTriggersAfterPatience) {
    // A pure-noise target cannot keep improving, so training must stop long
    // before max_epochs, exactly `patience` evaluations past the best one.
    dv::Dataset ds = linear_dataset(400, 66);
    dv::RandomStream noise(67, 0);
    for (Eigen::Index i = 0; i < ds.outputs.size(); ++i) ds.outputs(i) = noise.normal();
    dv::Network net = random_net({1, {4}}, 9);
    dv::TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 64;
    cfg.max_epochs = 5000;
    cfg.patience = 8;
    cfg.seed = 5;
    const dv::TrainHistory hist = dv::train(net, ds, cfg);
    EXPECT_TRUE(hist.stopped_early);
    EXPECT_LT(hist.epochs_run, cfg.max_epochs);
    int evals_past_best = 0;
    for (const auto& ev : hist.evals)
        if (ev.epoch > hist.best_epoch) ++evals_past_best;
    EXPECT_EQ(evals_past_best, cfg.patience);
}

TEST(NnTrain, DivergentLearningRateRaisesNonFiniteLoss) {
    dv::Dataset ds = linear_dataset(200, 77);
    dv::Network net = random_net({1, {8}}, 10);
    dv::TrainConfig cfg;
    cfg.learning_rate = 1e200;
    cfg.batch_size = 32;
    cfg.max_epochs = 50;
    cfg.patience = 50;
    cfg.seed = 6;
    EXPECT_THROW(dv::train(net, ds, cfg), dv::NonFiniteLoss);
}

TEST(NnTrain, RequiresTrainAndValidSplits) {
    dv::Dataset ds = linear_dataset(100, 88);
    ds.valid_idx.clear();
    dv::Network net = random_net({1, {4}}, 11);
    EXPECT_THROW(dv::train(net, ds, dv::TrainConfig{}), std::invalid_argument);
    dv::TrainConfig bad;
    bad.learning_rate = -1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

// Full-size regression target: a 3x64 network on a 50k-row Heston surface
// dataset reaches validation RMSE below 5e-3 absolute implied vol.  This is
// the slowest unit test (dataset generation ~7 s, training ~80 s); the
// schedule was pinned from pilot runs (seeds 1/3/7 reach 4.2-4.6e-3 here).
TEST(NnTrain, FullScaleHestonSurfaceReachesTargetValidRmse) {
    dv::DatasetConfig dcfg;
    dcfg.model = dv::ModelKind::heston;
    dcfg.n_rows = 50000;
    dcfg.seed = 101;
    const dv::Dataset ds = dv::generate_dataset(dcfg);

    dv::RandomStream rng(1, 0);
    dv::Network net = dv::he_init({7, {64, 64, 64}}, rng);
    dv::TrainConfig cfg;
    cfg.learning_rate = 2e-3;
    cfg.batch_size = 256;
    cfg.max_epochs = 900;
    cfg.patience = 250;
    cfg.seed = 11;
    const dv::TrainHistory hist = dv::train(net, ds, cfg);
    EXPECT_LT(std::sqrt(hist.best_valid), 5e-3);
    EXPECT_TRUE(std::isfinite(hist.best_valid));
}

// --- Serialization ----------------------------------------------------------

TEST(NnIo, SaveLoadRoundTripsBitExactly) {
    TempDir tmp;
    dv::Network net = random_net({6, {24, 16}}, 131);
    dv::RandomStream rng(132, 0);
    for (Eigen::Index i = 0; i < 6; ++i) {
        net.mean(i) = rng.normal();
        net.stdev(i) = rng.uniform(0.3, 3.0);
    }
    const auto file = tmp.path / "net.dvnn";
    dv::save_network(net, file);
    const dv::Network back = dv::load_network(file);
    EXPECT_EQ(back.spec, net.spec);
    EXPECT_TRUE(back.mean == net.mean);
    EXPECT_TRUE(back.stdev == net.stdev);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        EXPECT_TRUE(back.weights[l] == net.weights[l]);
        EXPECT_TRUE(back.biases[l] == net.biases[l]);
    }
    Eigen::MatrixXd x(9, 6);
    for (Eigen::Index r = 0; r < 9; ++r)
        for (Eigen::Index c = 0; c < 6; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd y1 = dv::forward(net, x), y2 = dv::forward(back, x);
    for (Eigen::Index r = 0; r < 9; ++r) EXPECT_EQ(y1(r), y2(r));
}

TEST(NnIo, RejectsCorruptedFiles) {
    TempDir tmp;
    dv::Network net = random_net({3, {8}}, 141);
    const auto file = tmp.path / "net.dvnn";
    dv::save_network(net, file);
    const std::string good = slurp(file);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    spit(tmp.path / "magic.dvnn", bad_magic);
    EXPECT_THROW(dv::load_network(tmp.path / "magic.dvnn"), dv::FileFormatError);

    std::string bad_version = good;
    bad_version[4] = 99;
    spit(tmp.path / "version.dvnn", bad_version);
    EXPECT_THROW(dv::load_network(tmp.path / "version.dvnn"), dv::UnsupportedVersion);

    std::string bad_blob = good;
    bad_blob[good.size() / 2] = static_cast<char>(bad_blob[good.size() / 2] ^ 0x40);
    spit(tmp.path / "flip.dvnn", bad_blob);
    EXPECT_THROW(dv::load_network(tmp.path / "flip.dvnn"), dv::FileFormatError);

    spit(tmp.path / "trunc.dvnn", good.substr(0, good.size() - 10));
    EXPECT_THROW(dv::load_network(tmp.path / "trunc.dvnn"), dv::FileFormatError);

    EXPECT_THROW(dv::load_network(tmp.path / "missing.dvnn"), dv::Error);
}
