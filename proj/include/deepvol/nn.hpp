#pragma once

// Fully-connected ReLU regression network built from scratch: forward
// evaluation, reverse-mode gradients, Adam training with early stopping,
// exact input-space Jacobians, and a checksummed binary file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <deepvol/dataset.hpp>
#include <deepvol/errors.hpp>
#include <deepvol/math.hpp>
#include <deepvol/rng.hpp>

namespace deepvol {

// --- Architecture -----------------------------------------------------------

// Shape of the network: input width, one ReLU layer per entry of
// hidden_widths, and a single linear output node (no activation).
struct NetworkSpec {
    int input_dim = 0;
    std::vector<int> hidden_widths;

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("NetworkSpec: input_dim must be >= 1");
        if (hidden_widths.empty())
            throw std::invalid_argument("NetworkSpec: need at least one hidden layer");
        for (int w : hidden_widths)
            if (w < 1) throw std::invalid_argument("NetworkSpec: layer widths must be >= 1");
    }

    // Affine layers, hidden plus the linear head.
    int n_layers() const { return static_cast<int>(hidden_widths.size()) + 1; }

    // Output width of affine layer l (0-based; the last layer is the head).
    int layer_out(int l) const {
        return l < static_cast<int>(hidden_widths.size()) ? hidden_widths[static_cast<std::size_t>(l)] : 1;
    }

    // Input width of affine layer l.
    int layer_in(int l) const {
        return l == 0 ? input_dim : hidden_widths[static_cast<std::size_t>(l) - 1];
    }

    bool operator==(const NetworkSpec&) const = default;
};

// Weights, biases, and the input standardization stats the network was
// trained with.  Layer l maps an a-vector to weights[l] * a + biases[l];
// weights[l] is (layer_out x layer_in).  Inputs to forward() are raw
// (unstandardized); evaluation first applies (x - mean) / stdev.
struct Network {
    NetworkSpec spec;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd mean, stdev;

    std::size_t n_params() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += static_cast<std::size_t>(weights[l].size()) + static_cast<std::size_t>(biases[l].size());
        return n;
    }

    void validate() const {
        spec.validate();
        const auto L = static_cast<std::size_t>(spec.n_layers());
        if (weights.size() != L || biases.size() != L)
            throw std::invalid_argument("Network: layer count does not match spec");
        for (int l = 0; l < spec.n_layers(); ++l) {
            const auto ul = static_cast<std::size_t>(l);
            if (weights[ul].rows() != spec.layer_out(l) || weights[ul].cols() != spec.layer_in(l) ||
                biases[ul].size() != spec.layer_out(l))
                throw std::invalid_argument("Network: layer " + std::to_string(l) + " has wrong shape");
        }
        if (mean.size() != spec.input_dim || stdev.size() != spec.input_dim)
            throw std::invalid_argument("Network: standardization stats must have input_dim entries");
        for (Eigen::Index i = 0; i < stdev.size(); ++i)
            if (!(stdev(i) > 0.0) || !std::isfinite(stdev(i)))
                throw std::invalid_argument("Network: standardization scales must be positive");
    }
};

// He initialization: weights ~ N(0, 2 / fan_in) layer by layer, biases zero.
// Standardization stats start at identity (mean 0, scale 1); train() replaces
// them with the dataset's.
inline Network he_init(const NetworkSpec& spec, RandomStream& rng) {
    spec.validate();
    Network net;
    net.spec = spec;
    net.weights.resize(static_cast<std::size_t>(spec.n_layers()));
    net.biases.resize(static_cast<std::size_t>(spec.n_layers()));
    for (int l = 0; l < spec.n_layers(); ++l) {
        const int out = spec.layer_out(l), in = spec.layer_in(l);
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        auto& W = net.weights[static_cast<std::size_t>(l)];
        W.resize(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) W(i, j) = sd * rng.normal();
        net.biases[static_cast<std::size_t>(l)] = Eigen::VectorXd::Zero(out);
    }
    net.mean = Eigen::VectorXd::Zero(spec.input_dim);
    net.stdev = Eigen::VectorXd::Ones(spec.input_dim);
    return net;
}

namespace detail {

// Affine chain with ReLU between hidden layers on an already-standardized
// batch (rows are samples).  Returns the n-vector of outputs.
inline Eigen::VectorXd forward_standardized(const Network& net, const Eigen::MatrixXd& x_std) {
    Eigen::MatrixXd a = x_std;
    const int L = net.spec.n_layers();
    for (int l = 0; l < L; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        Eigen::MatrixXd z = a * net.weights[ul].transpose();
        z.rowwise() += net.biases[ul].transpose();
        if (l + 1 < L)
            a = z.cwiseMax(0.0);
        else
            a = std::move(z);
    }
    return a.col(0);
}

inline Eigen::MatrixXd standardize_batch(const Network& net, const Eigen::MatrixXd& x) {
    if (x.cols() != net.spec.input_dim)
        throw std::invalid_argument("forward: batch has " + std::to_string(x.cols()) +
                                    " columns, network expects " + std::to_string(net.spec.input_dim));
    Eigen::MatrixXd x_std = x;
    x_std.rowwise() -= net.mean.transpose();
    x_std.array().rowwise() /= net.stdev.transpose().array();
    return x_std;
}

// One standardized input through the affine chain.  Kept as the single code
// path behind all public evaluation so a batch of n inputs is bit-identical
// to n single-input calls (matrix-matrix kernels round differently from
// matrix-vector ones, so a fused batched product would not be).
inline double forward_one_standardized(const Network& net, Eigen::VectorXd a) {
    const int L = net.spec.n_layers();
    for (int l = 0; l + 1 < L; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        a = ((net.weights[ul] * a + net.biases[ul]).cwiseMax(0.0)).eval();
    }
    return net.weights.back().row(0).dot(a) + net.biases.back()(0);
}

}  // namespace detail

// Batched evaluation on raw inputs (rows are samples); standardization is
// applied internally with the stats stored on the network.
inline Eigen::VectorXd forward(const Network& net, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd x_std = detail::standardize_batch(net, x);
    Eigen::VectorXd y(x_std.rows());
    for (Eigen::Index r = 0; r < x_std.rows(); ++r)
        y(r) = detail::forward_one_standardized(net, x_std.row(r).transpose());
    return y;
}

inline double forward_one(const Network& net, const Eigen::VectorXd& x) {
    return forward(net, x.transpose())(0);
}

// --- Gradients --------------------------------------------------------------

// A set of per-layer arrays with the same shapes as a network's parameters;
// used for gradients and Adam moment accumulators.
struct ParamBlock {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;

    static ParamBlock zeros_like(const Network& net) {
        ParamBlock p;
        p.w.reserve(net.weights.size());
        p.b.reserve(net.biases.size());
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            p.w.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
            p.b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        }
        return p;
    }
};

namespace detail {

// Mean-squared-error loss and its gradient with respect to every weight and
// bias, on a standardized batch.  Reverse-mode accumulation; the ReLU
// derivative at exactly zero is taken to be zero so runs are deterministic.
inline std::pair<double, ParamBlock> loss_and_grads_standardized(const Network& net,
                                                                 const Eigen::MatrixXd& x_std,
                                                                 const Eigen::VectorXd& y) {
    const int L = net.spec.n_layers();
    const auto n = x_std.rows();
    if (y.size() != n) throw std::invalid_argument("loss_and_grads: batch size mismatch");

    // Forward pass, keeping the post-activation of every layer.  Rows go
    // through the same per-sample kernels as forward() so that a perfect-fit
    // batch (y taken from forward) yields an exactly zero loss and gradient.
    std::vector<Eigen::MatrixXd> acts(static_cast<std::size_t>(L) + 1);
    acts[0] = x_std;
    for (int l = 0; l < L; ++l)
        acts[static_cast<std::size_t>(l) + 1].resize(n, net.spec.layer_out(l));
    for (Eigen::Index r = 0; r < n; ++r) {
        Eigen::VectorXd a = x_std.row(r).transpose();
        for (int l = 0; l + 1 < L; ++l) {
            const auto ul = static_cast<std::size_t>(l);
            a = ((net.weights[ul] * a + net.biases[ul]).cwiseMax(0.0)).eval();
            acts[ul + 1].row(r) = a.transpose();
        }
        acts[static_cast<std::size_t>(L)](r, 0) =
            net.weights.back().row(0).dot(a) + net.biases.back()(0);
    }

    const Eigen::VectorXd resid = acts[static_cast<std::size_t>(L)].col(0) - y;
    const double mse = resid.squaredNorm() / static_cast<double>(n);

    ParamBlock grads = ParamBlock::zeros_like(net);
    // d(mse)/d(output) arrives as an n x 1 "upstream" matrix and is pulled
    // back through the affine layers; hidden layers gate it on their own
    // post-activation being strictly positive (ReLU kink maps to 0).
    Eigen::MatrixXd g = (2.0 / static_cast<double>(n)) * resid;
    for (int l = L - 1; l >= 0; --l) {
        const auto ul = static_cast<std::size_t>(l);
        grads.w[ul] = g.transpose() * acts[ul];
        grads.b[ul] = g.colwise().sum().transpose();
        if (l > 0) {
            g = g * net.weights[ul];
            g = ((acts[ul].array() > 0.0).cast<double>() * g.array()).matrix();
        }
    }
    return {mse, std::move(grads)};
}

}  // namespace detail

// Loss and parameter gradients on raw inputs.
inline std::pair<double, ParamBlock> loss_and_grads(const Network& net, const Eigen::MatrixXd& x,
                                                    const Eigen::VectorXd& y) {
    return detail::loss_and_grads_standardized(net, detail::standardize_batch(net, x), y);
}

// --- Adam -------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ParamBlock m, v;
    long t = 0;

    static AdamState init(const Network& net) {
        return {ParamBlock::zeros_like(net), ParamBlock::zeros_like(net), 0};
    }
};

// One Adam update with bias correction, applied in place to the network.
inline void adam_step(Network& net, AdamState& state, const ParamBlock& grads, double learning_rate,
                      const AdamConfig& cfg = {}) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        state.m.w[l] = cfg.beta1 * state.m.w[l] + (1.0 - cfg.beta1) * grads.w[l];
        state.v.w[l] = cfg.beta2 * state.v.w[l] + (1.0 - cfg.beta2) * grads.w[l].cwiseProduct(grads.w[l]);
        net.weights[l].array() -= learning_rate * (state.m.w[l].array() / bc1) /
                                  ((state.v.w[l].array() / bc2).sqrt() + cfg.eps);
        state.m.b[l] = cfg.beta1 * state.m.b[l] + (1.0 - cfg.beta1) * grads.b[l];
        state.v.b[l] = cfg.beta2 * state.v.b[l] + (1.0 - cfg.beta2) * grads.b[l].cwiseProduct(grads.b[l]);
        net.biases[l].array() -= learning_rate * (state.m.b[l].array() / bc1) /
                                 ((state.v.b[l].array() / bc2).sqrt() + cfg.eps);
    }
}

// --- Training ---------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 256;
    int max_epochs = 500;
    int patience = 20;   // validation checks without improvement before stopping
    int eval_every = 1;  // epochs between validation checks
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
        if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    }
};

struct TrainEval {
    int epoch = 0;
    double train_mse = 0.0;  // mean over the epoch's mini-batches
    double valid_mse = 0.0;
    bool improved = false;
};

struct TrainHistory {
    std::vector<TrainEval> evals;
    double best_valid = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int epochs_run = 0;
    bool stopped_early = false;
};

// Mini-batch Adam over shuffled epochs with early stopping: after every
// eval_every epochs the validation MSE is measured and the best-so-far
// parameters are snapshotted; training stops after `patience` checks without
// a new minimum (or at max_epochs), and the snapshot -- not the last
// iterate -- is what remains in `net`.
inline TrainHistory train(Network& net, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    if (ds.train_idx.empty() || ds.valid_idx.empty())
        throw std::invalid_argument("train: dataset needs nonempty train and valid splits");
    if (ds.dim() != static_cast<std::size_t>(net.spec.input_dim))
        throw std::invalid_argument("train: dataset dimension does not match network input_dim");

    // The network adopts the dataset's standardization, so training can run
    // directly on pre-standardized rows.
    net.mean = ds.mean;
    net.stdev = ds.stdev;
    const Eigen::MatrixXd x_train = ds.standardized(ds.train_idx);
    const Eigen::VectorXd y_train = ds.gather_outputs(ds.train_idx);
    const Eigen::MatrixXd x_valid = ds.standardized(ds.valid_idx);
    const Eigen::VectorXd y_valid = ds.gather_outputs(ds.valid_idx);
    const auto n_train = x_train.rows();

    RandomStream rng(cfg.seed, 0);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n_train));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});

    AdamState adam = AdamState::init(net);
    TrainHistory hist;
    std::vector<Eigen::MatrixXd> best_w = net.weights;
    std::vector<Eigen::VectorXd> best_b = net.biases;
    int checks_since_improve = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Fisher-Yates reshuffle each epoch.
        for (std::size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.next_u64() % i)]);

        double epoch_loss = 0.0;
        long n_batches = 0;
        for (Eigen::Index start = 0; start < n_train; start += cfg.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n_train - start);
            Eigen::MatrixXd xb(len, x_train.cols());
            Eigen::VectorXd yb(len);
            for (Eigen::Index r = 0; r < len; ++r) {
                xb.row(r) = x_train.row(perm[static_cast<std::size_t>(start + r)]);
                yb(r) = y_train(perm[static_cast<std::size_t>(start + r)]);
            }
            auto [mse, grads] = detail::loss_and_grads_standardized(net, xb, yb);
            if (!std::isfinite(mse))
                throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(n_batches) +
                                    " (learning_rate=" + std::to_string(cfg.learning_rate) + ")");
            adam_step(net, adam, grads, cfg.learning_rate);
            epoch_loss += mse;
            ++n_batches;
        }
        hist.epochs_run = epoch;

        if (epoch % cfg.eval_every != 0) continue;
        const Eigen::VectorXd pred = detail::forward_standardized(net, x_valid);
        const double valid_mse = (pred - y_valid).squaredNorm() / static_cast<double>(y_valid.size());
        if (!std::isfinite(valid_mse))
            throw NonFiniteLoss("train: non-finite validation loss at epoch " + std::to_string(epoch));

        TrainEval ev;
        ev.epoch = epoch;
        ev.train_mse = epoch_loss / static_cast<double>(n_batches);
        ev.valid_mse = valid_mse;
        ev.improved = valid_mse < hist.best_valid;
        hist.evals.push_back(ev);

        if (ev.improved) {
            hist.best_valid = valid_mse;
            hist.best_epoch = epoch;
            best_w = net.weights;
            best_b = net.biases;
            checks_since_improve = 0;
        } else if (++checks_since_improve >= cfg.patience) {
            hist.stopped_early = true;
            break;
        }
    }

    net.weights = std::move(best_w);
    net.biases = std::move(best_b);
    return hist;
}

// --- Input Jacobian ---------------------------------------------------------

// Exact gradient of forward() with respect to the raw input at x: the chain
// rule through the frozen activation pattern, then through standardization
// (componentwise division by the stored scale).
inline Eigen::VectorXd input_jacobian(const Network& net, const Eigen::VectorXd& x) {
    if (x.size() != net.spec.input_dim)
        throw std::invalid_argument("input_jacobian: input has wrong dimension");
    const int L = net.spec.n_layers();
    Eigen::VectorXd a = (x - net.mean).cwiseQuotient(net.stdev);
    std::vector<Eigen::VectorXd> acts(static_cast<std::size_t>(L));
    for (int l = 0; l + 1 < L; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        acts[ul] = (net.weights[ul] * a + net.biases[ul]).cwiseMax(0.0);
        a = acts[ul];
    }
    Eigen::VectorXd g = net.weights.back().row(0).transpose();
    for (int l = L - 2; l >= 0; --l) {
        const auto ul = static_cast<std::size_t>(l);
        g = ((acts[ul].array() > 0.0).cast<double>() * g.array()).matrix();
        g = net.weights[ul].transpose() * g;
    }
    return g.cwiseQuotient(net.stdev);
}

// --- Serialization ----------------------------------------------------------
//
// File layout: magic "DVNN", format version (u32, little-endian), header
// length (u64), JSON header {spec, standardization stats}, float64 parameter
// blob in layer order (each W row-major, then its b), and a trailing CRC32
// over everything before it.

namespace detail {

constexpr std::uint32_t kNetworkFormatVersion = 1;

inline void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t read_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void append_f64(std::string& out, double x) {
    static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    append_u64(out, bits);
}

inline double read_f64(const unsigned char* p) {
    const std::uint64_t bits = read_u64(p);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

}  // namespace detail

inline void save_network(const Network& net, const std::filesystem::path& path) {
    net.validate();
    nlohmann::json header;
    header["input_dim"] = net.spec.input_dim;
    header["hidden_widths"] = net.spec.hidden_widths;
    header["mean"] = std::vector<double>(net.mean.data(), net.mean.data() + net.mean.size());
    header["std"] = std::vector<double>(net.stdev.data(), net.stdev.data() + net.stdev.size());
    const std::string header_str = header.dump();

    std::string buf;
    buf.reserve(24 + header_str.size() + net.n_params() * 8);
    buf += "DVNN";
    detail::append_u32(buf, detail::kNetworkFormatVersion);
    detail::append_u64(buf, header_str.size());
    buf += header_str;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const auto& W = net.weights[l];
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j) detail::append_f64(buf, W(i, j));
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
            detail::append_f64(buf, net.biases[l](i));
    }
    detail::append_u32(buf, crc32(buf.data(), buf.size()));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_network: cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.flush();
    if (!out) throw Error("save_network: write to " + path.string() + " failed");
}

inline Network load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_network: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

    if (buf.size() < 20 || std::memcmp(buf.data(), "DVNN", 4) != 0)
        throw FileFormatError("load_network: " + path.string() + " is not a network file (bad magic)");
    const std::uint32_t version = detail::read_u32(p + 4);
    if (version != detail::kNetworkFormatVersion)
        throw UnsupportedVersion("load_network: " + path.string() + " has format version " +
                                 std::to_string(version) + ", this build reads version " +
                                 std::to_string(detail::kNetworkFormatVersion));
    const std::uint64_t header_len = detail::read_u64(p + 8);
    if (header_len > buf.size() || 16 + header_len + 4 > buf.size())
        throw FileFormatError("load_network: " + path.string() + " is truncated");

    const std::uint32_t stored_crc = detail::read_u32(p + buf.size() - 4);
    if (crc32(buf.data(), buf.size() - 4) != stored_crc)
        throw FileFormatError("load_network: " + path.string() + " failed its checksum");

    Network net;
    try {
        const nlohmann::json header =
            nlohmann::json::parse(buf.substr(16, static_cast<std::size_t>(header_len)));
        net.spec.input_dim = header.at("input_dim").get<int>();
        net.spec.hidden_widths = header.at("hidden_widths").get<std::vector<int>>();
        const auto mean = header.at("mean").get<std::vector<double>>();
        const auto stdev = header.at("std").get<std::vector<double>>();
        net.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        net.stdev =
            Eigen::Map<const Eigen::VectorXd>(stdev.data(), static_cast<Eigen::Index>(stdev.size()));
    } catch (const nlohmann::json::exception& e) {
        throw FileFormatError("load_network: bad header in " + path.string() + ": " + e.what());
    }
    net.spec.validate();

    std::size_t need = 0;
    for (int l = 0; l < net.spec.n_layers(); ++l)
        need += static_cast<std::size_t>(net.spec.layer_out(l)) *
                    static_cast<std::size_t>(net.spec.layer_in(l)) +
                static_cast<std::size_t>(net.spec.layer_out(l));
    const std::size_t blob_off = 16 + static_cast<std::size_t>(header_len);
    if (blob_off + need * 8 + 4 != buf.size())
        throw FileFormatError("load_network: " + path.string() + " has a parameter blob of the wrong size");

    const unsigned char* q = p + blob_off;
    net.weights.resize(static_cast<std::size_t>(net.spec.n_layers()));
    net.biases.resize(static_cast<std::size_t>(net.spec.n_layers()));
    for (int l = 0; l < net.spec.n_layers(); ++l) {
        const auto ul = static_cast<std::size_t>(l);
        const int out = net.spec.layer_out(l), in = net.spec.layer_in(l);
        net.weights[ul].resize(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j, q += 8) net.weights[ul](i, j) = detail::read_f64(q);
        net.biases[ul].resize(out);
        for (int i = 0; i < out; ++i, q += 8) net.biases[ul](i) = detail::read_f64(q);
    }
    net.validate();
    return net;
}

}  // namespace deepvol
