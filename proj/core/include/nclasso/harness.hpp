#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nclasso/design_lab.hpp"
#include "nclasso/model_zoo.hpp"
#include "nclasso/solver.hpp"
#include "nclasso/theory_probe.hpp"

namespace nclasso {

struct SweepCell {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t s0 = 0;
    double magnitude = 1.0;
};

enum class LambdaPolicyKind { Paper, Manual, NlsK };

struct LambdaPolicy {
    LambdaPolicyKind kind = LambdaPolicyKind::Paper;
    double value = 0.0;  ///< lambda for Manual, k for NlsK
};

struct SweepConfig {
    LossVariant model = Robust{};
    DesignSpec design;  ///< `d` is taken from each cell
    NoiseSpec noise;
    std::vector<SweepCell> cells;
    std::size_t replicates = 1;
    LambdaPolicy lambda;
    FitConfig fit;
    std::uint64_t master_seed = 0;
    std::string output;  ///< records CSV; empty means keep in memory only
    std::size_t jobs = 1;
    std::size_t oracle_mc_n = 100000;  ///< sample size for the R(theta0) estimate used by ball B

    void validate() const;
};

struct SweepRecord {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t s0 = 0;
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    double lambda = 0.0;
    double err_l1 = 0.0;
    double err_l2 = 0.0;
    bool support_recovered = false;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool in_ball_b = false;
    double wall_time_ms = 0.0;
};

/// seed of replicate `replicate` in cell `cell`.
std::uint64_t record_seed(std::uint64_t master_seed, std::size_t cell, std::size_t replicate) noexcept;

/// Parses the JSON sweep configuration; unknown keys are rejected.
SweepConfig parse_sweep_config(const std::string& text);
SweepConfig load_sweep_config(const std::string& path);

/// Runs every (cell, replicate). Cells run in order and, when `config.output`
/// is set, each finished cell is appended to the CSV before the next starts.
std::vector<SweepRecord> run_sweep(const SweepConfig& config,
                                   const std::function<void(std::size_t cell)>& on_cell_done = {});

/// Fits one replicate; exposed for the CLI `fit`-like paths and tests.
SweepRecord run_replicate(const SweepConfig& config, std::size_t cell_index, std::size_t replicate);

void write_records_csv(std::ostream& out, const std::vector<SweepRecord>& records, bool header = true,
                       bool include_timing = true);
void write_records_csv(const std::string& path, const std::vector<SweepRecord>& records,
                       bool include_timing = true);
std::vector<SweepRecord> read_records_csv(const std::string& path);

enum class RatePredictor { S0SqrtLogOverN, NOnly, S0Only };

double predictor_value(RatePredictor predictor, std::size_t n, std::size_t d, std::size_t s0);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t cells = 0;
};

/// OLS of log(median err_l1 per cell) on log(predictor).
RateFit rate_slope(const std::vector<SweepRecord>& records, RatePredictor predictor);

struct CellSummary {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t s0 = 0;
    std::size_t replicates = 0;
    double median_err_l1 = 0.0;
    double iqr_err_l1 = 0.0;
    double median_err_l2 = 0.0;
    double iqr_err_l2 = 0.0;
    double convergence_rate = 0.0;
    double ball_b_fraction = 0.0;
};

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> values, double p);

/// One row per distinct (n, d, s0), in order of first appearance.
std::vector<CellSummary> summarize_cells(const std::vector<SweepRecord>& records);

struct ReportSummary {
    std::vector<CellSummary> cells;
    std::size_t probes_passed = 0;
    std::size_t probes_total = 0;
    std::string summary_line;
};

/// Writes into directory `out_dir`:
///   summary.csv        per-cell medians/IQR, convergence and ball-B fractions
///   plot_<model>.dat   "predictor median_err_l1" rows
///   probes.txt         pass/fail roster
ReportSummary emit_report(const std::vector<SweepRecord>& records, const std::vector<ProbeReport>& probes,
                          const std::string& out_dir, const std::string& model_tag = "model");

}  // namespace nclasso
