#pragma once

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <tuple>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "mcqr/baselines.hpp"
#include "mcqr/common.hpp"
#include "mcqr/estimator.hpp"
#include "mcqr/linalg.hpp"
#include "mcqr/rng.hpp"
#include "mcqr/sampling.hpp"

namespace mcqr {

// Substream labels so the coefficient draw, each dataset, and each estimator
// cell get independent streams derived only from (seed, labels), never from
// scheduling order.
inline constexpr std::uint64_t kStreamCoefficients = 0xB5;
inline constexpr std::uint64_t kStreamDataset = 0xDA;
inline constexpr std::uint64_t kStreamEstimator = 0xE5;

inline std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::gaussian_iso: return "gaussian_iso";
        case NoiseKind::multivariate_t: return "multivariate_t";
        case NoiseKind::pareto_copula: return "pareto_copula";
        case NoiseKind::banana: return "banana";
        case NoiseKind::contaminated_pareto: return "contaminated_pareto";
        case NoiseKind::contaminated_gaussian: return "contaminated_gaussian";
    }
    throw InvalidConfig("unknown noise kind");
}

inline NoiseKind noise_kind_from_string(const std::string& name) {
    if (name == "gaussian_iso") return NoiseKind::gaussian_iso;
    if (name == "multivariate_t") return NoiseKind::multivariate_t;
    if (name == "pareto_copula") return NoiseKind::pareto_copula;
    if (name == "banana") return NoiseKind::banana;
    if (name == "contaminated_pareto") return NoiseKind::contaminated_pareto;
    if (name == "contaminated_gaussian") return NoiseKind::contaminated_gaussian;
    throw InvalidConfig("unknown noise kind '" + name + "'");
}

inline std::string to_string(ReferenceKind kind) {
    switch (kind) {
        case ReferenceKind::standard_gaussian: return "standard_gaussian";
        case ReferenceKind::uniform_cube: return "uniform_cube";
        case ReferenceKind::spherical_uniform: return "spherical_uniform";
        case ReferenceKind::uniform_interval: return "uniform_interval";
    }
    throw InvalidConfig("unknown reference kind");
}

inline ReferenceKind reference_kind_from_string(const std::string& name) {
    if (name == "standard_gaussian") return ReferenceKind::standard_gaussian;
    if (name == "uniform_cube") return ReferenceKind::uniform_cube;
    if (name == "spherical_uniform") return ReferenceKind::spherical_uniform;
    if (name == "uniform_interval") return ReferenceKind::uniform_interval;
    throw InvalidConfig("unknown reference kind '" + name + "'");
}

inline std::string to_string(McqrSolver solver) {
    return solver == McqrSolver::exact ? "exact" : "subgradient";
}

inline McqrSolver solver_from_string(const std::string& name) {
    if (name == "exact") return McqrSolver::exact;
    if (name == "subgradient") return McqrSolver::subgradient;
    throw InvalidConfig("unknown solver '" + name + "'");
}

inline const std::vector<std::string>& known_estimators() {
    static const std::vector<std::string> names{"mcqr", "ols", "coorcqr",
                                               "spqr"};
    return names;
}

/// One Monte Carlo experiment: a set of estimators swept over either sample
/// sizes or contamination levels, everything else held fixed. Exactly one of
/// n_grid and epsilon_grid may be nonempty; an epsilon sweep holds the sample
/// size at n_fixed and overrides the noise model's contamination fraction at
/// each grid point.
struct ExperimentConfig {
    std::vector<std::string> estimators;
    NoiseModel noise;
    CovariateModel covariates;
    int d = 2;
    int p = 7;
    std::vector<int> n_grid;
    std::vector<double> epsilon_grid;
    int n_fixed = 0;
    int reps = 100;
    int m = 0;  // reference sample size, 0 means match n
    ReferenceModel reference;
    McqrSolver solver = McqrSolver::exact;
    std::uint64_t seed = 0;
    std::string output;
    // Timing is wall-clock and varies run to run; leaving it off keeps the
    // emitted files byte-identical for a given (config, seed).
    bool measure_runtime = false;

    void validate() const {
        require<InvalidConfig>(!estimators.empty(),
                               "config: estimators must be nonempty");
        for (std::size_t i = 0; i < estimators.size(); ++i) {
            const auto& name = estimators[i];
            const auto& known = known_estimators();
            require<InvalidConfig>(
                std::find(known.begin(), known.end(), name) != known.end(),
                "config: unknown estimator '" + name + "'");
            for (std::size_t k = 0; k < i; ++k)
                require<InvalidConfig>(estimators[k] != name,
                                       "config: duplicate estimator '" + name +
                                           "'");
        }
        require<InvalidConfig>(d >= 1 && p >= 1,
                               "config: d and p must be >= 1");
        require<InvalidConfig>(reps >= 1, "config: reps must be >= 1");
        require<InvalidConfig>(m >= 0, "config: m must be >= 0");
        const bool n_sweep = !n_grid.empty();
        const bool eps_sweep = !epsilon_grid.empty();
        require<InvalidConfig>(n_sweep != eps_sweep,
                               "config: exactly one of n_grid and epsilon_grid "
                               "must be given");
        if (n_sweep) {
            require<InvalidConfig>(n_fixed == 0,
                                   "config: n is only valid with epsilon_grid");
            for (std::size_t i = 0; i < n_grid.size(); ++i) {
                require<InvalidConfig>(n_grid[i] >= 1,
                                       "config: n_grid entries must be >= 1");
                if (i > 0)
                    require<InvalidConfig>(
                        n_grid[i] > n_grid[i - 1],
                        "config: n_grid must be strictly increasing");
            }
        } else {
            require<InvalidConfig>(n_fixed >= 1,
                                   "config: epsilon sweeps need a fixed n");
            require<InvalidConfig>(
                noise.kind == NoiseKind::contaminated_pareto ||
                    noise.kind == NoiseKind::contaminated_gaussian,
                "config: epsilon sweeps need a contaminated noise kind");
            for (std::size_t i = 0; i < epsilon_grid.size(); ++i) {
                require<InvalidConfig>(
                    epsilon_grid[i] >= 0.0 && epsilon_grid[i] < 1.0,
                    "config: epsilon_grid entries must lie in [0, 1)");
                if (i > 0)
                    require<InvalidConfig>(
                        epsilon_grid[i] > epsilon_grid[i - 1],
                        "config: epsilon_grid must be strictly increasing");
            }
        }
        noise.validate(d);
        covariates.validate();
        reference.validate(d);
    }

    int sweep_size() const {
        return static_cast<int>(n_grid.empty() ? epsilon_grid.size()
                                               : n_grid.size());
    }
};

namespace bench_detail {

inline void expect_keys(const nlohmann::json& j, const char* where,
                        std::initializer_list<const char*> allowed) {
    require<InvalidConfig>(j.is_object(),
                           std::string(where) + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) { ok = true; break; }
        require<InvalidConfig>(ok, std::string(where) + ": unknown key '" +
                                       it.key() + "'");
    }
}

} // namespace bench_detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using bench_detail::expect_keys;
    ExperimentConfig cfg;
    try {
        expect_keys(j, "config",
                    {"estimators", "noise", "covariates", "d", "p", "n_grid",
                     "epsilon_grid", "n", "reps", "m", "reference", "solver",
                     "seed", "output", "measure_runtime"});
        for (const auto& name : j.at("estimators"))
            cfg.estimators.push_back(name.get<std::string>());
        const auto& jn = j.at("noise");
        expect_keys(jn, "noise",
                    {"kind", "nu", "epsilon", "copula_base", "banana_jitter"});
        cfg.noise.kind = noise_kind_from_string(jn.at("kind").get<std::string>());
        if (jn.contains("nu")) cfg.noise.nu = jn.at("nu").get<double>();
        if (jn.contains("epsilon"))
            cfg.noise.epsilon = jn.at("epsilon").get<double>();
        if (jn.contains("copula_base"))
            cfg.noise.copula_base = jn.at("copula_base").get<double>();
        if (jn.contains("banana_jitter"))
            cfg.noise.banana_jitter = jn.at("banana_jitter").get<double>();
        if (j.contains("covariates")) {
            const auto& jc = j.at("covariates");
            expect_keys(jc, "covariates", {"base"});
            if (jc.contains("base"))
                cfg.covariates.base = jc.at("base").get<double>();
        }
        cfg.d = j.at("d").get<int>();
        cfg.p = j.at("p").get<int>();
        if (j.contains("n_grid"))
            for (const auto& v : j.at("n_grid"))
                cfg.n_grid.push_back(v.get<int>());
        if (j.contains("epsilon_grid"))
            for (const auto& v : j.at("epsilon_grid"))
                cfg.epsilon_grid.push_back(v.get<double>());
        if (j.contains("n")) cfg.n_fixed = j.at("n").get<int>();
        if (j.contains("reps")) cfg.reps = j.at("reps").get<int>();
        if (j.contains("m")) {
            const auto& jm = j.at("m");
            if (jm.is_string()) {
                require<InvalidConfig>(jm.get<std::string>() == "=n",
                                       "config: m must be an integer or \"=n\"");
                cfg.m = 0;
            } else {
                cfg.m = jm.get<int>();
            }
        }
        if (j.contains("reference"))
            cfg.reference.kind =
                reference_kind_from_string(j.at("reference").get<std::string>());
        if (j.contains("solver"))
            cfg.solver = solver_from_string(j.at("solver").get<std::string>());
        cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
        if (j.contains("measure_runtime"))
            cfg.measure_runtime = j.at("measure_runtime").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    require<IoError>(in.good(), "cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig("config: " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

/// One estimator fit on one simulated dataset. The error is the Mahalanobis
/// coefficient loss against the generating covariance of the covariates, and
/// seed is the derived stream id that drove any estimator-side randomness, so
/// a single cell can be replayed in isolation.
struct ResultRecord {
    std::string estimator;
    std::string noise_kind;
    int n = 0;
    int p = 0;
    int d = 0;
    std::optional<double> epsilon;
    int rep = 0;
    std::uint64_t seed = 0;
    double error = std::numeric_limits<double>::quiet_NaN();
    double log_error = std::numeric_limits<double>::quiet_NaN();
    double runtime_ms = 0.0;
    bool converged = false;
};

namespace bench_detail {

struct CellTask {
    int sweep = 0;
    int rep = 0;
};

inline ResultRecord run_cell_estimator(const ExperimentConfig& cfg,
                                       const std::string& estimator,
                                       std::size_t estimator_index,
                                       const RegressionDataset& ds,
                                       const Mat& sigma_true, int sweep,
                                       int rep) {
    ResultRecord rec;
    rec.estimator = estimator;
    rec.noise_kind = to_string(ds.noise.kind);
    rec.n = static_cast<int>(ds.y.rows());
    rec.p = cfg.p;
    rec.d = cfg.d;
    if (ds.noise.kind == NoiseKind::contaminated_pareto ||
        ds.noise.kind == NoiseKind::contaminated_gaussian)
        rec.epsilon = ds.noise.epsilon;
    rec.rep = rep;
    rec.seed = derive_stream(
        cfg.seed, {kStreamEstimator, static_cast<std::uint64_t>(estimator_index),
                   static_cast<std::uint64_t>(sweep),
                   static_cast<std::uint64_t>(rep)});

    const auto start = std::chrono::steady_clock::now();
    try {
        Mat b_hat;
        if (estimator == "ols") {
            b_hat = fit_ols(ds.x, ds.y).b_hat;
            rec.converged = true;
        } else if (estimator == "coorcqr") {
            b_hat = fit_coorcqr(ds.x, ds.y).b_hat;
            rec.converged = true;
        } else if (estimator == "spqr") {
            SpqrConfig sc;
            // the strict default stationarity threshold sits below the
            // smoothing floor on noisy data; 1e-6 reaches the same optimum
            sc.tol = 1e-6;
            const SpqrFit fit = fit_spqr(ds.x, ds.y, sc);
            b_hat = fit.b_hat;
            rec.converged = fit.converged;
        } else {
            McqrConfig mc;
            mc.reference = cfg.reference;
            mc.m = cfg.m;
            mc.solver = cfg.solver;
            RngStream rng(rec.seed, 0);
            const McqrFit fit = fit_mcqr(ds.x, ds.y, mc, rng);
            b_hat = fit.b_hat;
            rec.converged = fit.converged;
        }
        rec.error = mahalanobis_matrix_norm(b_hat - ds.b_star, sigma_true);
        rec.log_error = std::log(rec.error);
    } catch (const std::exception&) {
        // A failed fit is data, not a failed run: the record stays in the
        // table as a non-converged row with no error value.
        rec.converged = false;
        rec.error = std::numeric_limits<double>::quiet_NaN();
        rec.log_error = std::numeric_limits<double>::quiet_NaN();
    }
    if (cfg.measure_runtime) {
        const auto stop = std::chrono::steady_clock::now();
        rec.runtime_ms =
            std::chrono::duration<double, std::milli>(stop - start).count();
    }
    return rec;
}

} // namespace bench_detail

/// Draws the frozen experiment coefficients: d x p entries of mean 5 and
/// variance 5, from a stream derived only from the experiment seed.
inline Mat draw_experiment_coefficients(const ExperimentConfig& cfg) {
    RngStream rng(derive_stream(cfg.seed, {kStreamCoefficients}), 0);
    Mat b_star(cfg.d, cfg.p);
    const double scale = std::sqrt(5.0);
    for (int i = 0; i < cfg.d; ++i)
        for (int j = 0; j < cfg.p; ++j)
            b_star(i, j) = 5.0 + scale * rng.normal();
    return b_star;
}

/// Runs the full sweep. Cells (one dataset per (sweep point, rep), shared by
/// every estimator so comparisons are paired) are independent and may be
/// spread over a worker pool; every stream id is derived from (seed, labels),
/// so the records are identical for any jobs value. Records come back sorted
/// by (estimator, sweep point, rep).
inline std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg,
                                                int jobs = 1) {
    cfg.validate();
    require<InvalidConfig>(jobs >= 1, "run_experiment: jobs must be >= 1");
    const int sweeps = cfg.sweep_size();
    const int reps = cfg.reps;
    const std::size_t n_est = cfg.estimators.size();
    const bool eps_sweep = !cfg.epsilon_grid.empty();

    const Mat b_star = draw_experiment_coefficients(cfg);
    const Mat sigma_true = toeplitz_sigma(cfg.p, cfg.covariates.base);

    std::vector<bench_detail::CellTask> cells;
    cells.reserve(static_cast<std::size_t>(sweeps) * reps);
    for (int s = 0; s < sweeps; ++s)
        for (int r = 0; r < reps; ++r) cells.push_back({s, r});

    std::vector<ResultRecord> records(cells.size() * n_est);
    const auto run_cell = [&](const bench_detail::CellTask& cell) {
        const int n = eps_sweep ? cfg.n_fixed : cfg.n_grid[cell.sweep];
        NoiseModel noise = cfg.noise;
        if (eps_sweep) noise.epsilon = cfg.epsilon_grid[cell.sweep];
        RngStream data_rng(
            derive_stream(cfg.seed,
                          {kStreamDataset, static_cast<std::uint64_t>(cell.sweep),
                           static_cast<std::uint64_t>(cell.rep)}),
            0);
        RegressionDataset ds =
            make_dataset(n, b_star, cfg.covariates, noise, data_rng);
        for (std::size_t ie = 0; ie < n_est; ++ie) {
            const std::size_t slot =
                (ie * sweeps + cell.sweep) * static_cast<std::size_t>(reps) +
                cell.rep;
            records[slot] = bench_detail::run_cell_estimator(
                cfg, cfg.estimators[ie], ie, ds, sigma_true, cell.sweep,
                cell.rep);
        }
    };

    const int workers =
        std::min<int>(jobs, static_cast<int>(cells.size()));
    if (workers <= 1) {
        for (const auto& cell : cells) run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::exception_ptr first_error;
        const auto drain = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                try {
                    run_cell(cells[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return records;
}

/// Aggregate over one (estimator, sweep point) group. Location and spread are
/// computed over converged rows only; failures are counted separately. The
/// quantiles interpolate linearly between order statistics.
struct SummaryRow {
    std::string estimator;
    int n = 0;
    std::optional<double> epsilon;
    double mean_log_error = std::numeric_limits<double>::quiet_NaN();
    double median_error = std::numeric_limits<double>::quiet_NaN();
    double iqr = std::numeric_limits<double>::quiet_NaN();
    long count = 0;
    long failed = 0;
};

namespace bench_detail {

inline double interp_quantile(const std::vector<double>& sorted, double t) {
    const std::size_t k = sorted.size();
    if (k == 1) return sorted[0];
    const double h = t * static_cast<double>(k - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= k) return sorted[k - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace bench_detail

inline std::vector<SummaryRow> summarize(
    const std::vector<ResultRecord>& records) {
    require<EmptyInput>(!records.empty(), "summarize: no records");
    struct Group {
        std::vector<double> errors;
        double log_sum = 0.0;
        long failed = 0;
    };
    // nullopt epsilon sorts ahead of any real contamination level
    using Key = std::tuple<std::string, int, double>;
    std::map<Key, Group> groups;
    for (const auto& rec : records) {
        const double eps_key = rec.epsilon ? *rec.epsilon : -1.0;
        Group& g = groups[Key{rec.estimator, rec.n, eps_key}];
        if (rec.converged) {
            g.errors.push_back(rec.error);
            g.log_sum += rec.log_error;
        } else {
            ++g.failed;
        }
    }
    std::vector<SummaryRow> rows;
    rows.reserve(groups.size());
    for (auto& [key, g] : groups) {
        SummaryRow row;
        row.estimator = std::get<0>(key);
        row.n = std::get<1>(key);
        if (std::get<2>(key) >= 0.0) row.epsilon = std::get<2>(key);
        row.count = static_cast<long>(g.errors.size());
        row.failed = g.failed;
        if (!g.errors.empty()) {
            std::sort(g.errors.begin(), g.errors.end());
            row.mean_log_error = g.log_sum / static_cast<double>(row.count);
            row.median_error = bench_detail::interp_quantile(g.errors, 0.5);
            row.iqr = bench_detail::interp_quantile(g.errors, 0.75) -
                      bench_detail::interp_quantile(g.errors, 0.25);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline constexpr const char* kResultsHeader =
    "estimator,noise,n,p,d,epsilon,rep,seed,error,log_error,runtime_ms,"
    "converged";

inline constexpr const char* kSummaryHeader =
    "estimator,n,epsilon,mean_log_error,median_error,iqr,count,failed";

inline std::string format_field(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string results_csv(const std::vector<ResultRecord>& records) {
    std::ostringstream out;
    out << kResultsHeader << '\n';
    for (const auto& rec : records) {
        out << rec.estimator << ',' << rec.noise_kind << ',' << rec.n << ','
            << rec.p << ',' << rec.d << ','
            << (rec.epsilon ? format_field(*rec.epsilon) : std::string())
            << ',' << rec.rep << ',' << rec.seed << ','
            << format_field(rec.error) << ',' << format_field(rec.log_error)
            << ',' << format_field(rec.runtime_ms) << ','
            << (rec.converged ? '1' : '0') << '\n';
    }
    return out.str();
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << kSummaryHeader << '\n';
    for (const auto& row : rows) {
        out << row.estimator << ',' << row.n << ','
            << (row.epsilon ? format_field(*row.epsilon) : std::string())
            << ',' << format_field(row.mean_log_error) << ','
            << format_field(row.median_error) << ',' << format_field(row.iqr)
            << ',' << row.count << ',' << row.failed << '\n';
    }
    return out.str();
}

inline nlohmann::json results_json(const std::vector<ResultRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& rec : records) {
        nlohmann::json row;
        row["estimator"] = rec.estimator;
        row["noise"] = rec.noise_kind;
        row["n"] = rec.n;
        row["p"] = rec.p;
        row["d"] = rec.d;
        if (rec.epsilon)
            row["epsilon"] = *rec.epsilon;
        else
            row["epsilon"] = nullptr;
        row["rep"] = rec.rep;
        row["seed"] = rec.seed;
        if (std::isfinite(rec.error))
            row["error"] = rec.error;
        else
            row["error"] = nullptr;
        if (std::isfinite(rec.log_error))
            row["log_error"] = rec.log_error;
        else
            row["log_error"] = nullptr;
        row["runtime_ms"] = rec.runtime_ms;
        row["converged"] = rec.converged;
        arr.push_back(std::move(row));
    }
    return arr;
}

namespace bench_detail {

inline void write_text_file(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require<IoError>(out.good(), "cannot open output file: " + path);
    out << text;
    out.flush();
    require<IoError>(out.good(), "failed writing output file: " + path);
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline long parse_long_field(const std::string& s, const char* what) {
    require<IoError>(!s.empty(),
                     std::string("results csv: empty ") + what + " field");
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    require<IoError>(errno == 0 && end == s.c_str() + s.size(),
                     std::string("results csv: bad ") + what + " value '" + s +
                         "'");
    return v;
}

inline std::uint64_t parse_u64_field(const std::string& s, const char* what) {
    require<IoError>(!s.empty(),
                     std::string("results csv: empty ") + what + " field");
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    require<IoError>(errno == 0 && end == s.c_str() + s.size() &&
                         s.front() != '-',
                     std::string("results csv: bad ") + what + " value '" + s +
                         "'");
    return static_cast<std::uint64_t>(v);
}

inline double parse_double_field(const std::string& s, const char* what) {
    require<IoError>(!s.empty(),
                     std::string("results csv: empty ") + what + " field");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require<IoError>(end == s.c_str() + s.size(),
                     std::string("results csv: bad ") + what + " value '" + s +
                         "'");
    return v;
}

} // namespace bench_detail

inline void emit_csv(const std::vector<ResultRecord>& records,
                     const std::string& path) {
    bench_detail::write_text_file(results_csv(records), path);
}

inline void emit_summary_csv(const std::vector<SummaryRow>& rows,
                             const std::string& path) {
    bench_detail::write_text_file(summary_csv(rows), path);
}

inline void emit_json(const std::vector<ResultRecord>& records,
                      const std::string& path) {
    bench_detail::write_text_file(results_json(records).dump(2) + "\n", path);
}

inline std::vector<ResultRecord> parse_results_stream(std::istream& in) {
    std::string line;
    require<IoError>(static_cast<bool>(std::getline(in, line)),
                     "results csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require<IoError>(line == kResultsHeader,
                     "results csv: unexpected header '" + line + "'");
    std::vector<ResultRecord> records;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = bench_detail::split_fields(line);
        require<IoError>(fields.size() == 12,
                         "results csv: expected 12 fields, got " +
                             std::to_string(fields.size()));
        ResultRecord rec;
        rec.estimator = fields[0];
        rec.noise_kind = fields[1];
        rec.n = static_cast<int>(
            bench_detail::parse_long_field(fields[2], "n"));
        rec.p = static_cast<int>(
            bench_detail::parse_long_field(fields[3], "p"));
        rec.d = static_cast<int>(
            bench_detail::parse_long_field(fields[4], "d"));
        if (!fields[5].empty())
            rec.epsilon = bench_detail::parse_double_field(fields[5], "epsilon");
        rec.rep = static_cast<int>(
            bench_detail::parse_long_field(fields[6], "rep"));
        rec.seed = bench_detail::parse_u64_field(fields[7], "seed");
        rec.error = bench_detail::parse_double_field(fields[8], "error");
        rec.log_error =
            bench_detail::parse_double_field(fields[9], "log_error");
        rec.runtime_ms =
            bench_detail::parse_double_field(fields[10], "runtime_ms");
        if (fields[11] == "1")
            rec.converged = true;
        else if (fields[11] == "0")
            rec.converged = false;
        else
            throw IoError("results csv: bad converged value '" + fields[11] +
                          "'");
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<ResultRecord> parse_results_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<IoError>(in.good(), "cannot open results file: " + path);
    return parse_results_stream(in);
}

/// Default worker count for the command line: the MCQR_JOBS environment
/// variable when it holds a positive integer, otherwise 1.
inline int default_job_count() {
    const char* env = std::getenv("MCQR_JOBS");
    if (env == nullptr || *env == '\0') return 1;
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0' || v < 1) return 1;
    return static_cast<int>(v);
}

} // namespace mcqr
