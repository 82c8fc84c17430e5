#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nclasso/model_zoo.hpp"

namespace nclasso {

struct Dataset;

enum class ScheduleFormula { RobustPaper, BinaryPaper, NlsK, Manual };

std::string_view formula_tag(ScheduleFormula formula) noexcept;

/// Penalty level together with the increment-rate quantities it was derived from:
///   delta_n = sqrt(log(2d)/n),   r_n = 16 L m_x sqrt(log(4nd)/n).
struct PenaltySchedule {
    double lambda = 0.0;
    double delta_n = 0.0;
    double r_n = 0.0;
    ScheduleFormula formula = ScheduleFormula::Manual;
    double nls_k = 0.0;  ///< only meaningful for ScheduleFormula::NlsK
};

/// Default constant for the nonlinear least squares schedule,
/// k = 96 m_f m_x + 8 noise_sd m_f m_x.
double default_nls_k(const Nls& nls, double m_x);

/// sqrt(log(4nd)/n), the common factor of every schedule.
double schedule_rate(std::size_t n, std::size_t d);

/// Schedule prescribed for `model`: 32 m_rho m_x rate (Robust), 96 m_sigma m_x rate
/// (Binary), k rate (Nls, k defaults to default_nls_k).
PenaltySchedule lambda_for(const ModelSpec& model, std::size_t n, std::size_t d, double m_x = 1.0,
                           std::optional<double> nls_k = std::nullopt);

/// User-chosen lambda; delta_n and r_n are still filled in from the model constants.
PenaltySchedule manual_schedule(const ModelSpec& model, double lambda, std::size_t n, std::size_t d,
                                double m_x = 1.0);

/// Componentwise sign(v_j) max(|v_j| - tau, 0).
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double tau);

struct InitZero {};
struct InitWarmRidge {
    double ridge = 1e-2;
};
struct InitCustom {
    Eigen::VectorXd theta;
};
using InitSpec = std::variant<InitZero, InitWarmRidge, InitCustom>;

struct Backtracking {
    double shrink = 0.5;
    double grow = 2.0;
    double init_step = 1.0;
    double sufficient_decrease = 1e-4;
};

struct FitConfig {
    std::size_t max_iters = 5000;
    double tol_objective = 1e-10;
    double tol_prox_residual = 1e-8;
    /// Restart 0 starts from `init`, restart 1 from the other of {zero, warm
    /// ridge}, the rest from uniform points of an l1 ball.
    std::size_t restarts = 5;
    InitSpec init = InitZero{};
    double warm_ridge = 1e-2;
    Backtracking step;
    std::uint64_t seed = 0;  ///< stream for the random restarts

    void validate() const;
};

struct FitResult {
    Eigen::VectorXd theta_hat;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double prox_residual = 0.0;
    double step = 0.0;  ///< step size at which prox_residual was measured
    std::size_t restart_index = 0;
    std::optional<double> err_l1;
    std::optional<double> err_l2;
    std::vector<std::size_t> support;
    std::optional<bool> in_ball_b;
    std::vector<double> objective_trace;  ///< accepted objectives of the winning restart
};

/// R-hat(theta) + lambda |theta|_1.
double penalized_objective(const ModelSpec& model, const Dataset& data, const Eigen::VectorXd& theta,
                           double lambda);

/// Proximal gradient descent with Armijo backtracking and multiple restarts.
/// Returns the restart with the smallest penalized objective. `r_theta0`
/// (an estimate of R(theta0)) enables the ball-B membership flag.
FitResult prox_gradient_fit(const ModelSpec& model, const Dataset& data, const PenaltySchedule& schedule,
                            const FitConfig& config, std::optional<double> r_theta0 = std::nullopt);

/// Warm-started fits along `lambdas` (in the order given).
std::vector<FitResult> lambda_path(const ModelSpec& model, const Dataset& data, std::span<const double> lambdas,
                                   const FitConfig& config);

struct GridOracleResult {
    Eigen::VectorXd theta_star;
    double objective_star = 0.0;
    std::size_t evaluations = 0;
};

/// Exhaustive minimisation of the penalised objective over a regular grid on
/// [-w, w]^d (d <= 3). Ties go to the first point in lexicographic order.
GridOracleResult grid_oracle(const ModelSpec& model, const Dataset& data, double lambda, double box_half_width,
                             std::size_t points_per_axis);

/// grid_oracle followed by `passes` zoom-ins: each pass re-grids the cube of
/// half width one grid spacing around the incumbent.
GridOracleResult grid_oracle_refined(const ModelSpec& model, const Dataset& data, double lambda,
                                     double box_half_width, std::size_t points_per_axis, std::size_t passes);

/// |theta|_1 <= (r_theta0 + 1) / lambda + l1_theta0.
bool ball_b_check(const Eigen::VectorXd& theta, const PenaltySchedule& schedule, double r_theta0,
                  double l1_theta0);

double ball_b_radius(const PenaltySchedule& schedule, double r_theta0, double l1_theta0);

}  // namespace nclasso
