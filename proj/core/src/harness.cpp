#include "nclasso/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <tuple>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nclasso/errors.hpp"
#include "nclasso/parallel.hpp"
#include "nclasso/rng.hpp"
#include "loss_kernels.hpp"

namespace nclasso {

namespace {

constexpr std::string_view kColumns =
    "n,d,s0,replicate,seed,lambda,err_l1,err_l2,support_recovered,objective,iterations,converged,in_ball_b";

/// Population risk at the truth, used only for the ball-B radius.
double risk_at_truth(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise, std::size_t mc_n,
                     std::uint64_t seed) {
    if (const auto* nls = std::get_if<Nls>(&model.variant)) return nls->noise_sd * nls->noise_sd;
    if (const auto* r = std::get_if<Robust>(&model.variant)) {
        // R(theta0) = E rho(eps) does not involve the design
        Engine eng = make_engine(seed, "truth-risk");
        double sum = 0.0;
        for (std::size_t i = 0; i < mc_n; ++i) sum += detail::tukey_fast(sample_noise(noise, eng), r->t0);
        return sum / static_cast<double>(mc_n);
    }
    // Binary: E[sigma(X'theta0)(1 - sigma(X'theta0))]
    const Eigen::VectorXd index = gen_design(design, mc_n, derive_seed(seed, "truth-risk")) * model.theta0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < index.size(); ++i) {
        const double p = detail::logistic_value(index[i]);
        sum += p * (1.0 - p);
    }
    return sum / static_cast<double>(mc_n);
}

PenaltySchedule schedule_for(const SweepConfig& config, const ModelSpec& model, const SweepCell& cell) {
    const double m_x = config.design.m_x();
    switch (config.lambda.kind) {
        case LambdaPolicyKind::Manual: return manual_schedule(model, config.lambda.value, cell.n, cell.d, m_x);
        case LambdaPolicyKind::NlsK:
            if (!std::holds_alternative<Nls>(model.variant))
                throw InvalidArgument("the nls_k lambda policy applies to the nls model only");
            return lambda_for(model, cell.n, cell.d, m_x, config.lambda.value);
        case LambdaPolicyKind::Paper: break;
    }
    return lambda_for(model, cell.n, cell.d, m_x);
}

bool sign_pattern_matches(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        const int sa = (a[j] > 0.0) - (a[j] < 0.0);
        const int sb = (b[j] > 0.0) - (b[j] < 0.0);
        if (sa != sb) return false;
    }
    return true;
}

void write_row(std::ostream& out, const SweepRecord& r, bool include_timing) {
    fmt::print(out, "{},{},{},{},{},{:.17g},{:.17g},{:.17g},{},{:.17g},{},{},{}", r.n, r.d, r.s0, r.replicate,
               r.seed, r.lambda, r.err_l1, r.err_l2, r.support_recovered, r.objective, r.iterations, r.converged,
               r.in_ball_b);
    if (include_timing) fmt::print(out, ",{:.17g}", r.wall_time_ms);
    out << '\n';
}

void write_header(std::ostream& out, bool include_timing) {
    out << kColumns;
    if (include_timing) out << ",wall_time_ms";
    out << '\n';
}

template <class T>
T parse_field(std::string_view token, const std::string& path, std::size_t line) {
    T value{};
    if constexpr (std::is_same_v<T, bool>) {
        if (token == "true") return true;
        if (token == "false") return false;
        throw IoError(fmt::format("expected true/false, got '{}' on line {}", token, line), path);
    } else {
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || ptr != token.data() + token.size())
            throw IoError(fmt::format("malformed number '{}' on line {}", token, line), path);
        return value;
    }
}

double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

using CellKey = std::tuple<std::size_t, std::size_t, std::size_t>;

/// Records grouped by cell, groups in order of first appearance.
std::vector<std::pair<CellKey, std::vector<const SweepRecord*>>> group_cells(const std::vector<SweepRecord>& records) {
    std::vector<std::pair<CellKey, std::vector<const SweepRecord*>>> groups;
    std::map<CellKey, std::size_t> index;
    for (const auto& r : records) {
        const CellKey key{r.n, r.d, r.s0};
        auto [it, inserted] = index.try_emplace(key, groups.size());
        if (inserted) groups.push_back({key, {}});
        groups[it->second].second.push_back(&r);
    }
    return groups;
}

}  // namespace

std::uint64_t record_seed(std::uint64_t master_seed, std::size_t cell, std::size_t replicate) noexcept {
    return derive_seed(derive_seed(master_seed, "cell", cell), "replicate", replicate);
}

SweepRecord run_replicate(const SweepConfig& config, std::size_t cell_index, std::size_t replicate) {
    if (cell_index >= config.cells.size()) throw InvalidArgument("cell index out of range");
    const SweepCell& cell = config.cells[cell_index];
    const auto start = std::chrono::steady_clock::now();

    SweepRecord rec;
    rec.n = cell.n;
    rec.d = cell.d;
    rec.s0 = cell.s0;
    rec.replicate = replicate;
    rec.seed = record_seed(config.master_seed, cell_index, replicate);

    DesignSpec design = config.design;
    design.d = cell.d;
    ModelSpec model{config.model, gen_theta0(cell.d, cell.s0, cell.magnitude, derive_seed(rec.seed, "theta0"))};
    const Dataset data = make_dataset(model, design, config.noise, cell.n, derive_seed(rec.seed, "data"));
    const PenaltySchedule schedule = schedule_for(config, model, cell);
    rec.lambda = schedule.lambda;
    const double r_theta0 = risk_at_truth(model, design, config.noise, config.oracle_mc_n, rec.seed);

    FitConfig fit = config.fit;
    fit.seed = derive_seed(rec.seed, "fit");
    try {
        const FitResult res = prox_gradient_fit(model, data, schedule, fit, r_theta0);
        rec.err_l1 = res.err_l1.value_or(std::numeric_limits<double>::quiet_NaN());
        rec.err_l2 = res.err_l2.value_or(std::numeric_limits<double>::quiet_NaN());
        rec.support_recovered = sign_pattern_matches(res.theta_hat, model.theta0);
        rec.objective = res.objective;
        rec.iterations = res.iterations;
        rec.converged = res.converged;
        rec.in_ball_b = res.in_ball_b.value_or(false);
    } catch (const NumericalFailure& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rec.err_l1 = rec.err_l2 = rec.objective = nan;
        rec.iterations = e.iterate();
        rec.converged = false;
    }
    rec.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<SweepRecord> run_sweep(const SweepConfig& config, const std::function<void(std::size_t)>& on_cell_done) {
    config.validate();
    std::ofstream csv;
    if (!config.output.empty()) {
        csv.open(config.output, std::ios::binary | std::ios::trunc);
        if (!csv) throw IoError("cannot open sweep output for writing", config.output);
        write_header(csv, true);
    }
    std::vector<SweepRecord> all;
    all.reserve(config.cells.size() * config.replicates);
    for (std::size_t c = 0; c < config.cells.size(); ++c) {
        std::vector<SweepRecord> cell(config.replicates);
        parallel_for(config.replicates, config.jobs, [&](std::size_t r) { cell[r] = run_replicate(config, c, r); });
        if (csv.is_open()) {
            for (const auto& rec : cell) write_row(csv, rec, true);
            csv.flush();
            if (!csv) throw IoError("failed writing sweep output", config.output);
        }
        all.insert(all.end(), cell.begin(), cell.end());
        if (on_cell_done) on_cell_done(c);
    }
    return all;
}

void write_records_csv(std::ostream& out, const std::vector<SweepRecord>& records, bool header, bool include_timing) {
    if (header) write_header(out, include_timing);
    for (const auto& r : records) write_row(out, r, include_timing);
}

void write_records_csv(const std::string& path, const std::vector<SweepRecord>& records, bool include_timing) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open records file for writing", path);
    write_records_csv(out, records, true, include_timing);
    out.flush();
    if (!out) throw IoError("failed writing records", path);
}

std::vector<SweepRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open records file", path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("records file is empty", path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool timing = false;
    if (line == std::string(kColumns) + ",wall_time_ms")
        timing = true;
    else if (line != kColumns)
        throw IoError("unexpected records header", path);
    const std::size_t expected = timing ? 14 : 13;

    std::vector<SweepRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            f.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (f.size() != expected) throw IoError(fmt::format("line {} has {} fields", line_no, f.size()), path);
        SweepRecord r;
        r.n = parse_field<std::size_t>(f[0], path, line_no);
        r.d = parse_field<std::size_t>(f[1], path, line_no);
        r.s0 = parse_field<std::size_t>(f[2], path, line_no);
        r.replicate = parse_field<std::size_t>(f[3], path, line_no);
        r.seed = parse_field<std::uint64_t>(f[4], path, line_no);
        r.lambda = parse_field<double>(f[5], path, line_no);
        r.err_l1 = parse_field<double>(f[6], path, line_no);
        r.err_l2 = parse_field<double>(f[7], path, line_no);
        r.support_recovered = parse_field<bool>(f[8], path, line_no);
        r.objective = parse_field<double>(f[9], path, line_no);
        r.iterations = parse_field<std::size_t>(f[10], path, line_no);
        r.converged = parse_field<bool>(f[11], path, line_no);
        r.in_ball_b = parse_field<bool>(f[12], path, line_no);
        if (timing) r.wall_time_ms = parse_field<double>(f[13], path, line_no);
        out.push_back(r);
    }
    return out;
}

double predictor_value(RatePredictor predictor, std::size_t n, std::size_t d, std::size_t s0) {
    if (n == 0 || d == 0) throw InvalidArgument("predictor needs n, d >= 1");
    const auto nd = static_cast<double>(n) * static_cast<double>(d);
    switch (predictor) {
        case RatePredictor::S0SqrtLogOverN:
            return static_cast<double>(s0) * std::sqrt(std::log(nd) / static_cast<double>(n));
        case RatePredictor::NOnly: return static_cast<double>(n);
        case RatePredictor::S0Only: return static_cast<double>(s0);
    }
    return 0.0;
}

RateFit rate_slope(const std::vector<SweepRecord>& records, RatePredictor predictor) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [key, group] : group_cells(records)) {
        std::vector<double> errs;
        for (const auto* r : group)
            if (std::isfinite(r->err_l1)) errs.push_back(r->err_l1);
        if (errs.empty()) continue;
        const double med = median_of(std::move(errs));
        const double p = predictor_value(predictor, std::get<0>(key), std::get<1>(key), std::get<2>(key));
        if (!(med > 0.0) || !(p > 0.0)) throw InvalidArgument("rate fit needs positive medians and predictors");
        xs.push_back(std::log(p));
        ys.push_back(std::log(med));
    }
    std::vector<double> distinct = xs;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) throw InvalidArgument("rate fit needs at least 3 distinct predictor values");

    const auto k = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    fit.cells = xs.size();
    return fit;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw InvalidArgument("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0,1]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CellSummary> summarize_cells(const std::vector<SweepRecord>& records) {
    std::vector<CellSummary> out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& [key, group] : group_cells(records)) {
        CellSummary s;
        std::tie(s.n, s.d, s.s0) = key;
        s.replicates = group.size();
        std::vector<double> l1;
        std::vector<double> l2;
        std::size_t converged = 0;
        std::size_t in_ball = 0;
        for (const auto* r : group) {
            if (std::isfinite(r->err_l1)) l1.push_back(r->err_l1);
            if (std::isfinite(r->err_l2)) l2.push_back(r->err_l2);
            converged += r->converged ? 1 : 0;
            in_ball += r->in_ball_b ? 1 : 0;
        }
        s.median_err_l1 = l1.empty() ? nan : quantile(l1, 0.5);
        s.iqr_err_l1 = l1.empty() ? nan : quantile(l1, 0.75) - quantile(l1, 0.25);
        s.median_err_l2 = l2.empty() ? nan : quantile(l2, 0.5);
        s.iqr_err_l2 = l2.empty() ? nan : quantile(l2, 0.75) - quantile(l2, 0.25);
        s.convergence_rate = static_cast<double>(converged) / static_cast<double>(group.size());
        s.ball_b_fraction = static_cast<double>(in_ball) / static_cast<double>(group.size());
        out.push_back(s);
    }
    return out;
}

ReportSummary emit_report(const std::vector<SweepRecord>& records, const std::vector<ProbeReport>& probes,
                          const std::string& out_dir, const std::string& model_tag) {
    if (records.empty()) throw InvalidArgument("report needs at least one record");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory: " + ec.message(), out_dir);

    ReportSummary summary;
    summary.cells = summarize_cells(records);

    auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot open report file for writing", p.string());
        return out;
    };
    auto finish = [](std::ofstream& out, const std::filesystem::path& p) {
        out.flush();
        if (!out) throw IoError("failed writing report file", p.string());
    };

    const std::filesystem::path dir(out_dir);
    {
        const auto p = dir / "summary.csv";
        auto out = open(p);
        out << "n,d,s0,replicates,median_err_l1,iqr_err_l1,median_err_l2,iqr_err_l2,convergence_rate,ball_b_fraction\n";
        for (const auto& c : summary.cells)
            fmt::print(out, "{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", c.n, c.d, c.s0,
                       c.replicates, c.median_err_l1, c.iqr_err_l1, c.median_err_l2, c.iqr_err_l2, c.convergence_rate,
                       c.ball_b_fraction);
        finish(out, p);
    }
    {
        const auto p = dir / fmt::format("plot_{}.dat", model_tag);
        auto out = open(p);
        out << "# s0*sqrt(log(n*d)/n) median_err_l1\n";
        for (const auto& c : summary.cells)
            fmt::print(out, "{:.17g} {:.17g}\n", predictor_value(RatePredictor::S0SqrtLogOverN, c.n, c.d, c.s0),
                       c.median_err_l1);
        finish(out, p);
    }
    {
        const auto p = dir / "probes.txt";
        auto out = open(p);
        out << "# probe roster\n";
        for (const auto& r : probes) {
            fmt::print(out, "{} {} measured={:.17g} bound={:.17g}\n", r.passed ? "PASS" : "FAIL", r.check_name,
                       r.measured, r.bound);
            summary.probes_passed += r.passed ? 1 : 0;
        }
        summary.probes_total = probes.size();
        finish(out, p);
    }
    summary.summary_line = fmt::format("cells={} records={} probes passed {}/{} failed {}", summary.cells.size(),
                                       records.size(), summary.probes_passed, summary.probes_total,
                                       summary.probes_total - summary.probes_passed);
    return summary;
}

}  // namespace nclasso
