#include "nclasso_tools/cli.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "nclasso/design_lab.hpp"
#include "nclasso/errors.hpp"
#include "nclasso/harness.hpp"
#include "nclasso/model_zoo.hpp"
#include "nclasso/parallel.hpp"
#include "nclasso/rng.hpp"
#include "nclasso/solver.hpp"
#include "nclasso/theory_probe.hpp"

namespace nclasso::cli {

namespace {

struct Flags {
    std::string model = "robust";
    std::size_t n = 200;
    std::size_t d = 10;
    std::size_t s0 = 2;
    double magnitude = 1.0;
    std::uint64_t seed = 1;
    std::optional<double> lambda;
    double t0 = Robust{}.t0;
    std::string noise = "gaussian";
    std::optional<double> noise_sd;
    std::optional<std::size_t> replicates;
    std::string config;
    std::string out;
    std::optional<std::size_t> jobs;
};

void add_model_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--model", f.model, "robust | binary | nls")
        ->check(CLI::IsMember({"robust", "binary", "nls"}))
        ->capture_default_str();
    sub->add_option("--t0", f.t0, "Tukey cutoff (robust)")->capture_default_str();
    sub->add_option("--noise", f.noise, "gaussian | laplace | student | contam")
        ->check(CLI::IsMember({"gaussian", "laplace", "student", "contam"}))
        ->capture_default_str();
    sub->add_option("--noise-sd", f.noise_sd, "noise scale; for nls also the model noise level");
    sub->add_option("--seed", f.seed, "master seed")->capture_default_str();
}

void add_size_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--n", f.n, "sample size")->capture_default_str();
    sub->add_option("--d", f.d, "dimension")->capture_default_str();
    sub->add_option("--s0", f.s0, "sparsity of theta0")->capture_default_str();
    sub->add_option("--magnitude", f.magnitude, "nonzero size of theta0")->capture_default_str();
}

LossVariant variant_of(const Flags& f) {
    if (f.model == "robust") return Robust{f.t0};
    if (f.model == "binary") return Binary{};
    return Nls{LinkKind::Tanh, f.noise_sd.value_or(Nls{}.noise_sd)};
}

NoiseSpec noise_of(const Flags& f) {
    if (f.model == "nls") {
        if (f.noise != "gaussian") throw InvalidArgument("the nls model needs --noise gaussian");
        return {Gaussian{f.noise_sd.value_or(Nls{}.noise_sd)}};
    }
    const double s = f.noise_sd.value_or(1.0);
    if (f.noise == "gaussian") return {Gaussian{s}};
    if (f.noise == "laplace") return {Laplace{s}};
    if (f.noise == "student") return {StudentT{StudentT{}.dof, s}};
    ContaminatedGaussian c;
    c.sd1 = s;
    return {c};
}

DesignSpec design_of(std::size_t d) {
    DesignSpec design;
    design.d = d;
    return design;
}

Eigen::VectorXd read_vector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vector file", path);
    std::vector<double> values;
    std::string token;
    while (in >> token) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw IoError("malformed number '" + token + "'", path);
        }
    }
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void write_vector(const std::string& path, const Eigen::VectorXd& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open vector file for writing", path);
    for (Eigen::Index j = 0; j < v.size(); ++j) fmt::print(out, "{:.17g}\n", v[j]);
    out.flush();
    if (!out) throw IoError("failed writing vector", path);
}

int cmd_generate(const Flags& f, std::ostream& out) {
    if (f.out.empty()) throw InvalidArgument("generate needs --out");
    const ModelSpec model{variant_of(f), gen_theta0(f.d, f.s0, f.magnitude, derive_seed(f.seed, "theta0"))};
    const Dataset data = make_dataset(model, design_of(f.d), noise_of(f), f.n, derive_seed(f.seed, "data"));
    write_dataset(f.out, data);
    write_vector(f.out + ".theta0", model.theta0);
    fmt::print(out, "wrote {} rows x {} columns to {} (truth in {}.theta0)\n", data.n(), data.d(), f.out, f.out);
    return kOk;
}

int cmd_fit(const Flags& f, const std::string& data_path, const std::string& theta0_path, std::size_t restarts,
            std::ostream& out) {
    const DatasetFile file = read_dataset(data_path);
    if (file.model_tag != f.model)
        throw InvalidArgument(fmt::format("dataset was generated for model '{}', --model is '{}'", file.model_tag, f.model));
    ModelSpec model{variant_of(f), {}};
    if (!theta0_path.empty()) {
        model.theta0 = read_vector(theta0_path);
        if (model.theta0.size() != file.x.cols()) throw InvalidArgument("theta0 length does not match the dataset");
    }
    Dataset data;
    data.x = file.x;
    data.y = file.y;
    data.model = model;
    data.design = design_of(static_cast<std::size_t>(file.x.cols()));
    data.noise = noise_of(f);
    data.seed = file.seed;

    const PenaltySchedule schedule = f.lambda ? manual_schedule(model, *f.lambda, data.n(), data.d())
                                              : lambda_for(model, data.n(), data.d());
    FitConfig cfg;
    cfg.restarts = restarts;
    cfg.seed = derive_seed(f.seed, "fit");
    const FitResult res = prox_gradient_fit(model, data, schedule, cfg);

    fmt::print(out, "lambda={:.6g} objective={:.10g} iterations={} converged={} restart={} support={}\n",
               schedule.lambda, res.objective, res.iterations, res.converged, res.restart_index, res.support.size());
    if (res.err_l1) fmt::print(out, "err_l1={:.6g} err_l2={:.6g}\n", *res.err_l1, *res.err_l2);
    if (!f.out.empty()) {
        nlohmann::ordered_json j;
        j["lambda"] = schedule.lambda;
        j["objective"] = res.objective;
        j["iterations"] = res.iterations;
        j["converged"] = res.converged;
        j["prox_residual"] = res.prox_residual;
        j["restart_index"] = res.restart_index;
        j["theta_hat"] = std::vector<double>(res.theta_hat.data(), res.theta_hat.data() + res.theta_hat.size());
        if (res.err_l1) {
            j["err_l1"] = *res.err_l1;
            j["err_l2"] = *res.err_l2;
        }
        std::ofstream o(f.out, std::ios::binary);
        if (!o) throw IoError("cannot open fit output for writing", f.out);
        o << j.dump(2) << '\n';
        if (!o) throw IoError("failed writing fit output", f.out);
    }
    return kOk;
}

int cmd_sweep(const Flags& f, std::ostream& out) {
    if (f.config.empty()) throw InvalidArgument("sweep needs --config");
    SweepConfig cfg = load_sweep_config(f.config);
    if (!f.out.empty()) cfg.output = f.out;
    if (f.jobs) cfg.jobs = *f.jobs;
    if (f.replicates) cfg.replicates = *f.replicates;
    cfg.validate();
    const auto records = run_sweep(cfg, [&](std::size_t c) {
        const auto& cell = cfg.cells[c];
        fmt::print(out, "cell {}/{} done (n={} d={} s0={})\n", c + 1, cfg.cells.size(), cell.n, cell.d, cell.s0);
    });
    for (const auto& s : summarize_cells(records))
        fmt::print(out, "n={} d={} s0={} median_err_l1={:.6g} converged={:.3f} in_ball_b={:.3f}\n", s.n, s.d, s.s0,
                   s.median_err_l1, s.convergence_rate, s.ball_b_fraction);
    try {
        const RateFit fit = rate_slope(records, RatePredictor::S0SqrtLogOverN);
        fmt::print(out, "rate slope={:.4f} r2={:.4f} over {} cells\n", fit.slope, fit.r_squared, fit.cells);
    } catch (const InvalidArgument&) {
        // fewer than 3 distinct predictor values: no slope to report
    }
    return kOk;
}

std::vector<ProbeReport> model_probes(const Flags& f, std::size_t mc_n, std::size_t n_dirs) {
    const ModelSpec model{variant_of(f), gen_theta0(f.d, f.s0, f.magnitude, derive_seed(f.seed, "theta0"))};
    const DesignSpec design = design_of(f.d);
    const NoiseSpec noise = noise_of(f);
    std::vector<ProbeReport> reports;
    for (const double gamma : {0.25, 0.5, 1.0, 2.0})
        reports.push_back(gradient_identification_check(model, design, noise, n_dirs, gamma, mc_n,
                                                        derive_seed(f.seed, "identification")));
    reports.push_back(risk_curvature_scan(model, design, noise, 1.0, 20, mc_n, derive_seed(f.seed, "curvature")));
    const Dataset data = make_dataset(model, design, noise, f.n, derive_seed(f.seed, "data"));
    const PenaltySchedule schedule = f.lambda ? manual_schedule(model, *f.lambda, f.n, f.d) : lambda_for(model, f.n, f.d);
    reports.push_back(increment_ratio_probe(model, data, schedule, 500, mc_n, derive_seed(f.seed, "increment")));
    return reports;
}

std::vector<ProbeReport> lemma_probes(std::uint64_t seed) {
    std::vector<ProbeReport> reports;
    for (const auto variant : {MaxAverageVariant::Bounded, MaxAverageVariant::GaussianTimesBounded})
        reports.push_back(lemma_max_average_check(1.0, 400, 100, 500, derive_seed(seed, "max-average"), variant));
    for (const auto coupling : {Coupling::Independent, Coupling::Identical})
        reports.push_back(
            lemma_subgaussian_truncation_check(1.0, 1.0, 0.1, 1000000, derive_seed(seed, "truncation"), coupling));
    return reports;
}

int cmd_probe(const Flags& f, const std::string& suite, std::size_t mc_n, std::size_t n_dirs, std::ostream& out) {
    std::vector<ProbeReport> reports;
    if (suite != "lemmas") reports = model_probes(f, mc_n, n_dirs);
    if (suite != "model") {
        auto lemmas = lemma_probes(f.seed);
        reports.insert(reports.end(), lemmas.begin(), lemmas.end());
    }
    std::size_t passed = 0;
    for (const auto& r : reports) {
        fmt::print(out, "[{}] {} measured={:.6g} bound={:.6g} se={:.3g}\n", r.passed ? "PASS" : "FAIL", r.check_name,
                   r.measured, r.bound, r.mc_std_error);
        passed += r.passed ? 1 : 0;
    }
    if (!f.out.empty()) write_probe_reports(f.out, reports);
    fmt::print(out, "probes passed {}/{}\n", passed, reports.size());
    return passed == reports.size() ? kOk : kCheckFailed;
}

int cmd_oracle_check(const Flags& f, std::size_t points, std::size_t passes, std::ostream& out) {
    if (f.d > 3) throw UnsupportedDimension(fmt::format("oracle-check supports d <= 3, got d={}", f.d));
    const std::size_t s0 = std::min(f.s0, f.d);
    const ModelSpec model{variant_of(f), gen_theta0(f.d, s0, f.magnitude, derive_seed(f.seed, "theta0"))};
    const Dataset data = make_dataset(model, design_of(f.d), noise_of(f), f.n, derive_seed(f.seed, "data"));
    const PenaltySchedule schedule = f.lambda ? manual_schedule(model, *f.lambda, f.n, f.d) : lambda_for(model, f.n, f.d);
    FitConfig cfg;
    cfg.seed = derive_seed(f.seed, "fit");
    const FitResult fit = prox_gradient_fit(model, data, schedule, cfg);
    // every minimiser satisfies lambda |theta|_1 <= R-hat(0)
    const double box = empirical_risk(model, data, Eigen::VectorXd::Zero(data.x.cols())) / schedule.lambda * 1.01;
    const GridOracleResult grid = grid_oracle_refined(model, data, schedule.lambda, box, points, passes);
    const double tol = 1e-6 * (1.0 + std::abs(grid.objective_star));
    const bool ok = fit.objective <= grid.objective_star + tol;
    fmt::print(out, "[{}] solver={:.12g} grid={:.12g} tolerance={:.3g} evaluations={}\n", ok ? "PASS" : "FAIL",
               fit.objective, grid.objective_star, tol, grid.evaluations);
    return ok ? kOk : kCheckFailed;
}

int cmd_report(const Flags& f, const std::vector<std::string>& records_paths, const std::string& probes_path,
               std::ostream& out) {
    if (f.out.empty()) throw InvalidArgument("report needs --out <directory>");
    std::vector<SweepRecord> records;
    for (const auto& p : records_paths) {
        auto part = read_records_csv(p);
        records.insert(records.end(), part.begin(), part.end());
    }
    std::vector<ProbeReport> probes;
    if (!probes_path.empty()) probes = read_probe_reports(probes_path);
    const ReportSummary summary = emit_report(records, probes, f.out, f.model);
    fmt::print(out, "{}\n", summary.summary_line);
    return summary.probes_passed == summary.probes_total ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse nonconvex M-estimation: data generation, fitting, sweeps and numerical checks", "nclasso"};
    app.require_subcommand(1);
    Flags f;

    auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
    add_model_flags(generate, f);
    add_size_flags(generate, f);
    generate->add_option("--out", f.out, "dataset path")->required();

    auto* fit = app.add_subcommand("fit", "fit one dataset");
    std::string data_path;
    std::string theta0_path;
    std::size_t restarts = FitConfig{}.restarts;
    add_model_flags(fit, f);
    fit->add_option("--data", data_path, "dataset written by generate")->required();
    fit->add_option("--theta0", theta0_path, "true parameter, one value per line");
    fit->add_option("--lambda", f.lambda, "penalty override");
    fit->add_option("--restarts", restarts, "number of restarts")->capture_default_str();
    fit->add_option("--out", f.out, "JSON result path");

    auto* sweep = app.add_subcommand("sweep", "run a Monte Carlo sweep from a config file");
    sweep->add_option("--config", f.config, "JSON sweep configuration")->required();
    sweep->add_option("--out", f.out, "records CSV (overrides the config)");
    sweep->add_option("--jobs", f.jobs, "worker threads");
    sweep->add_option("--replicates", f.replicates, "replicates per cell (overrides the config)");

    auto* probe = app.add_subcommand("probe", "numerical checks of curvature, increments and concentration bounds");
    std::string suite = "all";
    std::size_t mc_n = 100000;
    std::size_t n_dirs = 200;
    add_model_flags(probe, f);
    add_size_flags(probe, f);
    probe->add_option("--lambda", f.lambda, "penalty override for the increment probe");
    probe->add_option("--suite", suite, "model | lemmas | all")
        ->check(CLI::IsMember({"model", "lemmas", "all"}))
        ->capture_default_str();
    probe->add_option("--mc", mc_n, "Monte Carlo sample size")->capture_default_str();
    probe->add_option("--dirs", n_dirs, "directions per identification check")->capture_default_str();
    probe->add_option("--out", f.out, "JSON-lines report path");

    auto* oracle = app.add_subcommand("oracle-check", "compare the solver with exhaustive grid search (d <= 3)");
    std::size_t points = 81;
    std::size_t passes = 3;
    add_model_flags(oracle, f);
    add_size_flags(oracle, f);
    oracle->add_option("--lambda", f.lambda, "penalty override");
    oracle->add_option("--points", points, "grid points per axis")->capture_default_str();
    oracle->add_option("--passes", passes, "zoom-in passes")->capture_default_str();

    auto* report = app.add_subcommand("report", "aggregate sweep records and probe results");
    std::vector<std::string> records_paths;
    std::string probes_path;
    report->add_option("--records", records_paths, "records CSV (repeatable)")->required();
    report->add_option("--probes", probes_path, "JSON-lines probe report");
    report->add_option("--model", f.model, "tag used in plot file names")->capture_default_str();
    report->add_option("--out", f.out, "output directory")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*generate) return cmd_generate(f, out);
        if (*fit) return cmd_fit(f, data_path, theta0_path, restarts, out);
        if (*sweep) return cmd_sweep(f, out);
        if (*probe) return cmd_probe(f, suite, mc_n, n_dirs, out);
        if (*oracle) return cmd_oracle_check(f, points, passes, out);
        if (*report) return cmd_report(f, records_paths, probes_path, out);
    } catch (const InvalidArgument& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kUsage;
    } catch (const NumericalFailure& e) {
        fmt::print(err, "numerical failure: {}\n", e.what());
        return kRuntime;
    } catch (const IoError& e) {
        fmt::print(err, "i/o error: {}\n", e.what());
        return kRuntime;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kRuntime;
    }
    return kUsage;
}

}  // namespace nclasso::cli
