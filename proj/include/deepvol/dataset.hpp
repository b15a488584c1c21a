#pragma once

// Labeled-dataset assembly: draws model parameters and surface coordinates
// from their sampling distributions, labels each row with the model implied
// volatility, then shuffles, splits, and standardizes. Datasets round-trip
// through a columnar CSV plus a JSON sidecar.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <deepvol/errors.hpp>
#include <deepvol/heston.hpp>
#include <deepvol/parallel.hpp>
#include <deepvol/quotes.hpp>
#include <deepvol/rbergomi.hpp>
#include <deepvol/rng.hpp>
#include <deepvol/sampling.hpp>
#include <json.hpp>

namespace deepvol {

enum class ModelKind { heston, rbergomi };

inline std::string to_string(ModelKind m) {
    return m == ModelKind::heston ? "heston" : "rbergomi";
}

inline ModelKind model_from_string(const std::string& s) {
    if (s == "heston") return ModelKind::heston;
    if (s == "rbergomi") return ModelKind::rbergomi;
    throw std::invalid_argument("unknown model: " + s);
}

struct DatasetConfig {
    ModelKind model = ModelKind::heston;
    std::size_t n_rows = 10000;
    std::uint64_t seed = 1;
    // rows generated per model-parameter draw; pairs each parameter set with
    // several surface coordinates so MC-labeled models amortize one path
    // ensemble across a batch. 0 selects the model default (1 for Heston,
    // 40 for rough Bergomi).
    std::size_t group_size = 0;
    double train_frac = 0.90;
    double valid_frac = 0.05;
    // rough Bergomi label accuracy
    std::size_t mc_paths = 40000;
    std::size_t grid_points = 500;
    double max_drop_frac = 0.01;
    std::vector<MarginalSpec> priors;         // empty = model default
    std::optional<CoordBox> box_override;     // default: the model's domain box

    std::size_t resolved_group_size() const {
        if (group_size > 0) return group_size;
        return model == ModelKind::heston ? 1 : 40;
    }
    std::vector<MarginalSpec> resolved_priors() const {
        if (!priors.empty()) return priors;
        return model == ModelKind::heston ? heston_priors() : rbergomi_priors();
    }
    CoordBox box() const {
        if (box_override) return *box_override;
        return model == ModelKind::heston ? heston_box() : rbergomi_box();
    }

    void validate() const {
        if (n_rows < 1) throw std::invalid_argument("DatasetConfig: n_rows must be positive");
        if (!(train_frac > 0.0 && valid_frac >= 0.0 && train_frac + valid_frac < 1.0 + 1e-12))
            throw std::invalid_argument("DatasetConfig: invalid split fractions");
        if (mc_paths < 2 || grid_points < 4)
            throw std::invalid_argument("DatasetConfig: mc_paths/grid_points too small");
        if (!(max_drop_frac >= 0.0 && max_drop_frac <= 1.0))
            throw std::invalid_argument("DatasetConfig: max_drop_frac must lie in [0,1]");
        const auto pr = resolved_priors();
        const std::size_t want = model == ModelKind::heston ? 5 : 4;
        if (pr.size() != want)
            throw std::invalid_argument("DatasetConfig: wrong number of priors for model");
        for (const auto& p : pr) p.validate();
        box().validate();
    }
};

struct Dataset {
    ModelKind model = ModelKind::heston;
    std::vector<std::string> column_names;  // input columns, in matrix order
    Eigen::MatrixXd inputs;                 // n x d
    Eigen::VectorXd outputs;                // n (implied vols)
    std::vector<std::size_t> train_idx, valid_idx, test_idx;
    Eigen::VectorXd mean, stdev;  // training-row standardization stats
    std::size_t n_requested = 0;
    std::size_t n_dropped = 0;
    std::uint64_t seed = 0;

    Eigen::Index n() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }

    // Standardized view of selected rows: (x - mean) / stdev per column.
    Eigen::MatrixXd standardized(const std::vector<std::size_t>& rows) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), inputs.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) =
                (inputs.row(static_cast<Eigen::Index>(rows[i])) - mean.transpose())
                    .cwiseQuotient(stdev.transpose());
        return out;
    }
    Eigen::VectorXd gather_outputs(const std::vector<std::size_t>& rows) const {
        Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            out(static_cast<Eigen::Index>(i)) = outputs(static_cast<Eigen::Index>(rows[i]));
        return out;
    }
};

namespace detail {

inline std::vector<std::string> input_columns(ModelKind model) {
    if (model == ModelKind::heston) return {"lambda", "v_bar", "v0", "rho", "eta", "M", "T"};
    return {"H", "eta", "rho", "v0", "M", "T"};
}

inline std::array<double, 2> draw_coord(const WeightedKDE* kde, const CoordBox& box,
                                        RandomStream& rng) {
    return kde ? sample_wkde(*kde, box, rng) : sample_box_uniform(box, rng);
}

// Shuffles surviving rows, splits train/valid/test, computes training-row
// standardization stats.
inline void finalize_dataset(Dataset& ds, const DatasetConfig& cfg,
                             std::vector<std::vector<double>>& rows) {
    const std::size_t kept = rows.size();
    if (kept == 0) throw Error("generate_dataset: every row was dropped");
    RandomStream shuffler(cfg.seed, 0xD5ull << 56);
    std::vector<std::size_t> order(kept);
    std::iota(order.begin(), order.end(), 0);
    shuffler.shuffle(order);

    const auto d = static_cast<Eigen::Index>(rows[0].size() - 1);
    ds.inputs.resize(static_cast<Eigen::Index>(kept), d);
    ds.outputs.resize(static_cast<Eigen::Index>(kept));
    for (std::size_t i = 0; i < kept; ++i) {
        const auto& r = rows[order[i]];
        for (Eigen::Index c = 0; c < d; ++c)
            ds.inputs(static_cast<Eigen::Index>(i), c) = r[static_cast<std::size_t>(c)];
        ds.outputs(static_cast<Eigen::Index>(i)) = r.back();
    }

    const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_frac * kept));
    const auto n_valid = static_cast<std::size_t>(std::floor(cfg.valid_frac * kept));
    ds.train_idx.resize(n_train);
    ds.valid_idx.resize(n_valid);
    ds.test_idx.resize(kept - n_train - n_valid);
    std::iota(ds.train_idx.begin(), ds.train_idx.end(), 0);
    std::iota(ds.valid_idx.begin(), ds.valid_idx.end(), n_train);
    std::iota(ds.test_idx.begin(), ds.test_idx.end(), n_train + n_valid);

    ds.mean = Eigen::VectorXd::Zero(d);
    ds.stdev = Eigen::VectorXd::Ones(d);
    if (!ds.train_idx.empty()) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(d), m2 = Eigen::VectorXd::Zero(d);
        for (std::size_t r : ds.train_idx) {
            const auto row = ds.inputs.row(static_cast<Eigen::Index>(r));
            m += row.transpose();
            m2 += row.cwiseProduct(row).transpose();
        }
        const double nt = static_cast<double>(ds.train_idx.size());
        ds.mean = m / nt;
        for (Eigen::Index c = 0; c < d; ++c) {
            const double var = m2(c) / nt - ds.mean(c) * ds.mean(c);
            ds.stdev(c) = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
}

}  // namespace detail

// Generates a labeled dataset. Inputs are drawn from the product of the
// model-parameter priors and the (m, T) distribution (`kde` if given,
// uniform over the model's domain box otherwise); outputs are model implied
// vols. Rows whose implied vol cannot be recovered are dropped and counted;
// generation aborts if the dropped fraction exceeds the configured cap.
// The result is fully determined by (config, kde): parameter draws use
// per-row (or per-group) RNG substreams, so thread count does not matter.
inline Dataset generate_dataset(const DatasetConfig& cfg, const WeightedKDE* kde = nullptr) {
    cfg.validate();
    const auto priors = cfg.resolved_priors();
    const CoordBox box = cfg.box();
    const std::size_t n = cfg.n_rows;

    // row buffers: inputs ++ label; NaN label marks a dropped row
    const std::size_t d = priors.size() + 2;
    std::vector<std::vector<double>> raw(n);

    if (cfg.model == ModelKind::heston) {
        parallel_blocks(n, 64, [&](std::size_t, std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                RandomStream rng(cfg.seed, i);
                HestonParams p{};
                p.lambda = sample_marginal(priors[0], rng);
                p.v_bar = sample_marginal(priors[1], rng);
                p.v0 = sample_marginal(priors[2], rng);
                p.rho = sample_marginal(priors[3], rng);
                p.eta = sample_marginal(priors[4], rng);
                const auto mt = detail::draw_coord(kde, box, rng);
                const OptionCoord coord{std::exp(mt[0]), mt[1]};
                double iv = std::numeric_limits<double>::quiet_NaN();
                try {
                    iv = heston_iv(p, coord);
                } catch (const Error&) {
                } catch (const std::invalid_argument&) {
                }
                raw[i] = {p.lambda, p.v_bar, p.v0, p.rho, p.eta, coord.M, coord.T, iv};
            }
        });
    } else {
        const std::size_t g = cfg.resolved_group_size();
        const std::size_t n_groups = (n + g - 1) / g;
        // groups run sequentially; the path simulation inside each group is
        // where the parallelism lives
        for (std::size_t gi = 0; gi < n_groups; ++gi) {
            RandomStream rng(cfg.seed, gi);
            RBergomiParams p{};
            p.H = sample_marginal(priors[0], rng);
            p.eta = sample_marginal(priors[1], rng);
            p.rho = sample_marginal(priors[2], rng);
            p.v0 = sample_marginal(priors[3], rng);
            const std::size_t lo = gi * g, hi = std::min(n, lo + g);

            std::vector<std::array<double, 2>> mts(hi - lo);
            double t_max = 0.0;
            for (auto& mt : mts) {
                mt = detail::draw_coord(kde, box, rng);
                t_max = std::max(t_max, mt[1]);
            }
            // snap maturities onto the shared simulation grid
            const auto spy = static_cast<std::size_t>(
                std::ceil(static_cast<double>(cfg.grid_points) / t_max));
            const auto steps = static_cast<std::size_t>(
                std::ceil(t_max * static_cast<double>(spy) - 1e-9));
            const double dt = t_max / static_cast<double>(steps);
            std::vector<OptionCoord> coords(mts.size());
            for (std::size_t j = 0; j < mts.size(); ++j) {
                const auto k = std::max<std::int64_t>(1, std::llround(mts[j][1] / dt));
                coords[j] = {std::exp(mts[j][0]), static_cast<double>(k) * dt};
            }
            MCConfig mc{cfg.mc_paths, spy, RBergomiScheme::exact_cholesky, true, true,
                        rng.next_u64()};
            std::vector<SurfacePoint> pts;
            bool group_failed = false;
            try {
                pts = rbergomi_surface(p, coords, mc);
            } catch (const Error&) {
                group_failed = true;
            }
            for (std::size_t j = 0; j < coords.size(); ++j) {
                const double iv = group_failed ? std::numeric_limits<double>::quiet_NaN()
                                               : pts[j].iv;
                raw[lo + j] = {p.H, p.eta, p.rho, p.v0, coords[j].M, coords[j].T, iv};
            }
        }
    }

    std::vector<std::vector<double>> rows;
    rows.reserve(n);
    std::size_t dropped = 0;
    for (auto& r : raw) {
        if (r.size() == d + 1 && std::isfinite(r.back()))
            rows.push_back(std::move(r));
        else
            ++dropped;
    }
    if (static_cast<double>(dropped) > cfg.max_drop_frac * static_cast<double>(n)) {
        std::ostringstream msg;
        msg << "generate_dataset: dropped " << dropped << " of " << n << " rows ("
            << 100.0 * static_cast<double>(dropped) / static_cast<double>(n)
            << "%), above the configured cap of " << 100.0 * cfg.max_drop_frac << "%";
        throw Error(msg.str());
    }

    Dataset ds;
    ds.model = cfg.model;
    ds.column_names = detail::input_columns(cfg.model);
    ds.n_requested = n;
    ds.n_dropped = dropped;
    ds.seed = cfg.seed;
    detail::finalize_dataset(ds, cfg, rows);
    return ds;
}

// ---------------------------------------------------------------------------
// file round-trip: data.csv (17-significant-digit text) + meta.json sidecar
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline nlohmann::json split_ranges(const std::vector<std::size_t>& idx) {
    // splits are contiguous after the generation shuffle; store them as
    // [begin, end) ranges, falling back to explicit lists otherwise
    bool contiguous = true;
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (idx[i] != idx[i - 1] + 1) contiguous = false;
    if (idx.empty()) return nlohmann::json{{"begin", 0}, {"end", 0}};
    if (contiguous) return nlohmann::json{{"begin", idx.front()}, {"end", idx.back() + 1}};
    return nlohmann::json(idx);
}

inline std::vector<std::size_t> split_from_json(const nlohmann::json& j) {
    std::vector<std::size_t> idx;
    if (j.is_array()) {
        idx = j.get<std::vector<std::size_t>>();
    } else {
        const auto b = j.at("begin").get<std::size_t>(), e = j.at("end").get<std::size_t>();
        idx.resize(e - b);
        std::iota(idx.begin(), idx.end(), b);
    }
    return idx;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& dir,
                          const nlohmann::json& extra_meta = nlohmann::json::object()) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream csv(fs::path(dir) / "data.csv");
    if (!csv) throw Error("write_dataset: cannot open " + dir + "/data.csv");
    for (std::size_t c = 0; c < ds.column_names.size(); ++c)
        csv << ds.column_names[c] << ',';
    csv << "iv\n";
    for (Eigen::Index r = 0; r < ds.n(); ++r) {
        for (Eigen::Index c = 0; c < ds.dim(); ++c) csv << detail::fmt17(ds.inputs(r, c)) << ',';
        csv << detail::fmt17(ds.outputs(r)) << '\n';
    }
    if (!csv.flush()) throw Error("write_dataset: failed writing " + dir + "/data.csv");

    nlohmann::json meta{
        {"model", to_string(ds.model)},
        {"seed", ds.seed},
        {"n_rows", ds.n()},
        {"n_requested", ds.n_requested},
        {"n_dropped", ds.n_dropped},
        {"columns", ds.column_names},
        {"split",
         {{"train", detail::split_ranges(ds.train_idx)},
          {"valid", detail::split_ranges(ds.valid_idx)},
          {"test", detail::split_ranges(ds.test_idx)}}},
        {"standardization",
         {{"mean", std::vector<double>(ds.mean.data(), ds.mean.data() + ds.mean.size())},
          {"std", std::vector<double>(ds.stdev.data(), ds.stdev.data() + ds.stdev.size())}}},
    };
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    std::ofstream js(fs::path(dir) / "meta.json");
    if (!js) throw Error("write_dataset: cannot open " + dir + "/meta.json");
    js << meta.dump(2) << '\n';
    if (!js.flush()) throw Error("write_dataset: failed writing " + dir + "/meta.json");
}

inline Dataset read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream js(fs::path(dir) / "meta.json");
    if (!js) throw FileFormatError("read_dataset: missing " + dir + "/meta.json");
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FileFormatError(std::string("read_dataset: bad meta.json: ") + e.what());
    }

    Dataset ds;
    try {
        ds.model = model_from_string(meta.at("model").get<std::string>());
        ds.seed = meta.at("seed").get<std::uint64_t>();
        ds.n_requested = meta.at("n_requested").get<std::size_t>();
        ds.n_dropped = meta.at("n_dropped").get<std::size_t>();
        ds.column_names = meta.at("columns").get<std::vector<std::string>>();
        ds.train_idx = detail::split_from_json(meta.at("split").at("train"));
        ds.valid_idx = detail::split_from_json(meta.at("split").at("valid"));
        ds.test_idx = detail::split_from_json(meta.at("split").at("test"));
        const auto mv = meta.at("standardization").at("mean").get<std::vector<double>>();
        const auto sv = meta.at("standardization").at("std").get<std::vector<double>>();
        ds.mean = Eigen::Map<const Eigen::VectorXd>(mv.data(), static_cast<Eigen::Index>(mv.size()));
        ds.stdev =
            Eigen::Map<const Eigen::VectorXd>(sv.data(), static_cast<Eigen::Index>(sv.size()));
    } catch (const nlohmann::json::exception& e) {
        throw FileFormatError(std::string("read_dataset: bad meta.json: ") + e.what());
    }

    std::ifstream csv(fs::path(dir) / "data.csv");
    if (!csv) throw FileFormatError("read_dataset: missing " + dir + "/data.csv");
    std::string line;
    if (!std::getline(csv, line)) throw FileFormatError("read_dataset: empty data.csv");
    const auto header = detail::split_csv_line(line);
    if (header.size() != ds.column_names.size() + 1 || header.back() != "iv")
        throw FileFormatError("read_dataset: data.csv header does not match sidecar columns");
    for (std::size_t c = 0; c < ds.column_names.size(); ++c)
        if (header[c] != ds.column_names[c])
            throw FileFormatError("read_dataset: data.csv header does not match sidecar columns");

    const auto d = static_cast<Eigen::Index>(ds.column_names.size());
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(csv, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != static_cast<std::size_t>(d) + 1)
            throw ParseError("line " + std::to_string(line_no) + ": wrong column count");
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            row[c] = detail::parse_double(cells[c], line_no, "value");
        rows.push_back(std::move(row));
    }
    ds.inputs.resize(static_cast<Eigen::Index>(rows.size()), d);
    ds.outputs.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (Eigen::Index c = 0; c < d; ++c)
            ds.inputs(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
        ds.outputs(static_cast<Eigen::Index>(r)) = rows[r].back();
    }
    const std::size_t total = ds.train_idx.size() + ds.valid_idx.size() + ds.test_idx.size();
    if (total != rows.size())
        throw FileFormatError("read_dataset: split sizes do not cover the CSV rows");
    return ds;
}

}  // namespace deepvol
