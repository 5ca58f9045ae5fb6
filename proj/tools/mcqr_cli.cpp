#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcqr/baselines.hpp"
#include "mcqr/bench.hpp"
#include "mcqr/common.hpp"
#include "mcqr/estimator.hpp"
#include "mcqr/linalg.hpp"
#include "mcqr/ot.hpp"
#include "mcqr/rng.hpp"
#include "mcqr/sampling.hpp"
#include "mcqr/theory.hpp"

namespace {

using mcqr::Mat;
using mcqr::Vec;

double parse_number(const std::string& field, const std::string& path) {
    std::size_t start = field.find_first_not_of(" \t");
    if (start == std::string::npos)
        throw mcqr::IoError(path + ": empty numeric field");
    const std::size_t stop = field.find_last_not_of(" \t");
    const std::string body = field.substr(start, stop - start + 1);
    char* end = nullptr;
    const double v = std::strtod(body.c_str(), &end);
    if (end != body.c_str() + body.size())
        throw mcqr::IoError(path + ": bad numeric field '" + field + "'");
    return v;
}

/// Reads a numeric matrix from comma-separated text. A first line that does
/// not parse as numbers is treated as a header and skipped.
Mat read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    mcqr::require<mcqr::IoError>(in.good(), "cannot open matrix file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto fields = mcqr::bench_detail::split_fields(line);
        std::vector<double> row;
        row.reserve(fields.size());
        try {
            for (const auto& f : fields) row.push_back(parse_number(f, path));
        } catch (const mcqr::IoError&) {
            if (first_content_line) {
                first_content_line = false;
                continue;
            }
            throw;
        }
        first_content_line = false;
        if (!rows.empty() && rows.front().size() != row.size())
            throw mcqr::IoError(path + ": ragged rows in matrix file");
        rows.push_back(std::move(row));
    }
    mcqr::require<mcqr::IoError>(!rows.empty(),
                                 path + ": matrix file has no data rows");
    Mat m(static_cast<Eigen::Index>(rows.size()),
          static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)]
                          [static_cast<std::size_t>(j)];
    return m;
}

nlohmann::json matrix_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_json(const Vec& v) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v[i]);
    return row;
}

void print_document(const nlohmann::json& doc, const std::string& output) {
    const std::string text = doc.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    if (!output.empty()) mcqr::bench_detail::write_text_file(text, output);
}

std::string summary_path_for(const std::string& results_path) {
    const std::string suffix = ".csv";
    if (results_path.size() > suffix.size() &&
        results_path.compare(results_path.size() - suffix.size(),
                             suffix.size(), suffix) == 0)
        return results_path.substr(0, results_path.size() - suffix.size()) +
               "_summary.csv";
    return results_path + "_summary.csv";
}

struct BenchOptions {
    std::string config_path;
    int jobs = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int run_bench(const BenchOptions& opt) {
    mcqr::ExperimentConfig cfg = mcqr::load_experiment_config(opt.config_path);
    if (opt.seed_given) cfg.seed = opt.seed;
    const int jobs = opt.jobs > 0 ? opt.jobs : mcqr::default_job_count();

    const auto records = mcqr::run_experiment(cfg, jobs);
    const auto rows = mcqr::summarize(records);

    if (cfg.output.empty()) {
        std::fputs(mcqr::results_csv(records).c_str(), stdout);
        return 0;
    }
    mcqr::emit_csv(records, cfg.output);
    const std::string summary_path = summary_path_for(cfg.output);
    mcqr::emit_summary_csv(rows, summary_path);
    std::printf("wrote %zu records to %s\n", records.size(),
                cfg.output.c_str());
    std::printf("wrote %zu summary rows to %s\n", rows.size(),
                summary_path.c_str());
    std::fputs(mcqr::summary_csv(rows).c_str(), stdout);
    return 0;
}

struct EstimateOptions {
    std::string x_path;
    std::string y_path;
    std::string method;
    std::string reference = "standard_gaussian";
    int m = 0;
    std::string solver = "exact";
    std::uint64_t seed = 0;
    std::string output;
};

int run_estimate(const EstimateOptions& opt) {
    const Mat x = read_matrix_csv(opt.x_path);
    const Mat y = read_matrix_csv(opt.y_path);

    nlohmann::json doc;
    doc["method"] = opt.method;
    doc["n"] = y.rows();
    doc["p"] = x.cols();
    doc["d"] = y.cols();

    if (opt.method == "ols") {
        doc["b_hat"] = matrix_json(mcqr::fit_ols(x, y).b_hat);
        doc["converged"] = true;
    } else if (opt.method == "coorcqr") {
        const auto fit = mcqr::fit_coorcqr(x, y);
        doc["b_hat"] = matrix_json(fit.b_hat);
        doc["q_hat"] = matrix_json(fit.q_hat);
        doc["objective"] = fit.objective;
        doc["converged"] = true;
    } else if (opt.method == "spqr") {
        const auto fit = mcqr::fit_spqr(x, y);
        doc["b_hat"] = matrix_json(fit.b_hat);
        doc["a_hat"] = vector_json(fit.a_hat);
        doc["objective"] = fit.objective;
        doc["iterations"] = fit.iterations;
        doc["converged"] = fit.converged;
    } else {
        mcqr::McqrConfig cfg;
        cfg.reference.kind = mcqr::reference_kind_from_string(opt.reference);
        cfg.m = opt.m;
        cfg.solver = mcqr::solver_from_string(opt.solver);
        mcqr::RngStream rng(opt.seed, 0);
        const auto fit = mcqr::fit_mcqr(x, y, cfg, rng);
        doc["b_hat"] = matrix_json(fit.b_hat);
        doc["objective"] = fit.objective;
        doc["gap"] = fit.gap;
        doc["grad_residual"] = fit.grad_residual;
        doc["iterations"] = fit.iterations;
        doc["converged"] = fit.converged;
        doc["solver"] = mcqr::to_string(fit.solver_used);
        doc["reference"] = opt.reference;
        doc["m"] = cfg.m > 0 ? cfg.m : static_cast<int>(x.rows());
        doc["seed"] = opt.seed;
    }
    print_document(doc, opt.output);
    return 0;
}

struct OtOptions {
    std::string a_path;
    std::string b_path;
    std::string output;
};

int run_ot(const OtOptions& opt) {
    const Mat a = read_matrix_csv(opt.a_path);
    const Mat b = read_matrix_csv(opt.b_path);

    mcqr::ot_detail::TransportEngine engine;
    const auto res = engine.solve(a, b);
    const double wip = 0.5 * a.rowwise().squaredNorm().mean() +
                       0.5 * b.rowwise().squaredNorm().mean() - res.objective;

    nlohmann::json doc;
    doc["m"] = a.rows();
    doc["n"] = b.rows();
    doc["d"] = a.cols();
    doc["w2_squared"] = 2.0 * res.objective;
    doc["wasserstein_product"] = wip;
    doc["dual_gap"] = res.dual_gap;
    doc["pivots"] = res.pivots;
    print_document(doc, opt.output);
    return 0;
}

struct CheckOutcome {
    std::string name;
    bool pass = false;
    double statistic = 0.0;
    double tolerance = 0.0;
};

CheckOutcome check_curve_values() {
    using mcqr::lower_bound_curve;
    double worst = std::abs(lower_bound_curve(0.0, 3.0) - 3.0);
    worst = std::max(worst, std::abs(lower_bound_curve(5.0, 0.0)));
    worst = std::max(worst, std::abs(lower_bound_curve(1.0, 1.0) -
                                     (std::sqrt(2.0) - 1.0)));
    return {"lower_bound_curve_values", worst <= 1e-12, worst, 1e-12};
}

CheckOutcome check_sorted_transport() {
    mcqr::RngStream rng(20240822ULL, 7);
    double worst = 0.0;
    const int sizes[][2] = {{40, 40}, {64, 80}, {120, 90}, {200, 200}};
    for (const auto& sz : sizes) {
        Vec a(sz[0]), b(sz[1]);
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.normal();
        for (Eigen::Index i = 0; i < b.size(); ++i)
            b[i] = rng.uniform(-2.0, 2.0);
        const double sorted = mcqr::wip_1d(a, b);
        const double engine = mcqr::wasserstein_product(
            mcqr::PointCloud(Mat(a)), mcqr::PointCloud(Mat(b)));
        worst = std::max(worst, std::abs(sorted - engine));
    }
    return {"sorted_transport_cross_check", worst <= 1e-9, worst, 1e-9};
}

CheckOutcome check_population_bound() {
    mcqr::RngStream rng(31415ULL, 0);
    const auto random_spd = [&](int dim) {
        Mat g(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) g(i, j) = rng.normal();
        return Mat(g * g.transpose() / dim + 0.3 * Mat::Identity(dim, dim));
    };
    double min_margin = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng.next_u64() % 5);
        const int p = 1 + static_cast<int>(rng.next_u64() % 5);
        Mat delta(d, p);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < p; ++j) delta(i, j) = 2.0 * rng.normal();
        const auto check = mcqr::verify_population_lower_bound(
            mcqr::SpdMatrix(random_spd(p)), delta,
            mcqr::SpdMatrix(random_spd(d)));
        min_margin = std::min(min_margin, check.lhs - check.rhs);
    }
    return {"population_lower_bound", min_margin >= -1e-9, min_margin, -1e-9};
}

CheckOutcome check_identity(mcqr::ResidualKind kind, const char* name,
                            bool fast) {
    const int reps = fast ? 5 : 20;
    const int n = fast ? 2000 : 10000;
    mcqr::RngStream rng(555ULL, static_cast<std::uint64_t>(kind) + 1);
    Vec diffs(reps);
    for (int r = 0; r < reps; ++r) {
        const auto check =
            mcqr::check_cqr_wip_identity(n, 1.3, rng, kind, 2.4);
        diffs[r] = check.lhs - check.rhs;
    }
    const double mean = diffs.mean();
    const double sd = std::sqrt((diffs.array() - mean).square().sum() /
                                std::max(reps - 1, 1));
    const double se = sd / std::sqrt(static_cast<double>(reps));
    return {name, std::abs(mean) <= 5.0 * se, std::abs(mean), 5.0 * se};
}

CheckOutcome check_superadditivity(bool fast) {
    const int trials = fast ? 12 : 40;
    const int n = fast ? 400 : 5000;
    const int boots = fast ? 8 : 20;
    const int required = fast ? 10 : 38;
    int passes = 0;
    for (int t = 0; t < trials; ++t)
        if (mcqr::sampled_superadditivity_trial(
                    20240818ULL, static_cast<std::uint64_t>(t + 1), n, 2, boots)
                .pass)
            ++passes;
    return {"squared_product_superadditivity",
            passes >= required,
            static_cast<double>(passes) / trials,
            static_cast<double>(required) / trials};
}

std::vector<CheckOutcome> check_rate_trend(bool fast) {
    mcqr::ExperimentConfig cfg;
    cfg.estimators = {"mcqr"};
    cfg.noise.kind = mcqr::NoiseKind::gaussian_iso;
    cfg.d = 2;
    cfg.p = 3;
    cfg.n_grid = fast ? std::vector<int>{40, 80, 160, 320}
                      : std::vector<int>{100, 200, 400, 800};
    cfg.reps = fast ? 8 : 20;
    cfg.seed = 424242ULL;

    const auto records = mcqr::run_experiment(cfg, mcqr::default_job_count());
    mcqr::RateSweep sweep;
    sweep.n_grid = cfg.n_grid;
    sweep.reps = cfg.reps;
    sweep.errors.resize(static_cast<Eigen::Index>(cfg.n_grid.size()), cfg.reps);
    for (std::size_t s = 0; s < cfg.n_grid.size(); ++s)
        for (int r = 0; r < cfg.reps; ++r)
            sweep.errors(static_cast<Eigen::Index>(s), r) =
                records[s * static_cast<std::size_t>(cfg.reps) +
                        static_cast<std::size_t>(r)]
                    .error;
    const auto fit = mcqr::estimate_rate_slope(sweep);
    return {{"estimation_error_trend", fit.slope <= -0.1, fit.slope, -0.1},
            {"estimation_error_trend_fit", fit.r2 >= 0.8, fit.r2, 0.8}};
}

int run_verify(const std::string& suite, const std::string& output) {
    const bool fast = suite == "fast";
    std::vector<CheckOutcome> checks;
    checks.push_back(check_curve_values());
    checks.push_back(check_sorted_transport());
    checks.push_back(check_population_bound());
    checks.push_back(
        check_identity(mcqr::ResidualKind::uniform01,
                       "cqr_transport_identity_uniform", fast));
    checks.push_back(
        check_identity(mcqr::ResidualKind::gaussian,
                       "cqr_transport_identity_gaussian", fast));
    checks.push_back(
        check_identity(mcqr::ResidualKind::point_mass,
                       "cqr_transport_identity_point_mass", fast));
    checks.push_back(check_superadditivity(fast));
    for (const auto& outcome : check_rate_trend(fast))
        checks.push_back(outcome);

    nlohmann::json report = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json row;
        row["check_name"] = c.name;
        row["pass"] = c.pass;
        row["statistic"] = c.statistic;
        row["tolerance"] = c.tolerance;
        report.push_back(std::move(row));
    }
    print_document(report, output);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiple-output composite quantile regression toolkit"};
    app.require_subcommand(0, 1);

    BenchOptions bench_opt;
    auto* bench = app.add_subcommand(
        "bench", "run a Monte Carlo benchmark from a JSON config");
    bench->add_option("--config", bench_opt.config_path, "experiment config")
        ->required();
    bench->add_option("--jobs", bench_opt.jobs,
                      "worker threads (default: MCQR_JOBS or 1)");
    auto* bench_seed =
        bench->add_option("--seed", bench_opt.seed, "override the config seed");

    EstimateOptions est_opt;
    auto* estimate =
        app.add_subcommand("estimate", "fit coefficients from data files");
    estimate->add_option("--x", est_opt.x_path, "covariate matrix (n x p csv)")
        ->required();
    estimate->add_option("--y", est_opt.y_path, "response matrix (n x d csv)")
        ->required();
    estimate->add_option("--method", est_opt.method, "estimator")
        ->required()
        ->check(CLI::IsMember({"mcqr", "ols", "coorcqr", "spqr"}));
    estimate
        ->add_option("--reference", est_opt.reference,
                     "reference distribution for mcqr")
        ->check(CLI::IsMember({"standard_gaussian", "uniform_cube",
                               "spherical_uniform", "uniform_interval"}));
    estimate->add_option("--m", est_opt.m,
                         "reference sample size (default: match n)");
    estimate->add_option("--solver", est_opt.solver, "mcqr solver")
        ->check(CLI::IsMember({"exact", "subgradient"}));
    estimate->add_option("--seed", est_opt.seed,
                         "stream seed for the reference draw");
    estimate->add_option("--output", est_opt.output,
                         "also write the JSON report here");

    OtOptions ot_opt;
    auto* ot = app.add_subcommand(
        "ot", "optimal transport between two point clouds");
    ot->add_option("--a", ot_opt.a_path, "first cloud (csv)")->required();
    ot->add_option("--b", ot_opt.b_path, "second cloud (csv)")->required();
    ot->add_option("--output", ot_opt.output, "also write the JSON report here");

    std::string suite = "all";
    std::string verify_output;
    auto* verify =
        app.add_subcommand("verify", "run the distributional identity checks");
    verify->add_option("--suite", suite, "all or fast")
        ->check(CLI::IsMember({"all", "fast"}));
    verify->add_option("--output", verify_output,
                       "also write the JSON report here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (bench->parsed()) {
            bench_opt.seed_given = bench_seed->count() > 0;
            return run_bench(bench_opt);
        }
        if (estimate->parsed()) return run_estimate(est_opt);
        if (ot->parsed()) return run_ot(ot_opt);
        if (verify->parsed()) return run_verify(suite, verify_output);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    std::puts(app.help().c_str());
    return 0;
}
