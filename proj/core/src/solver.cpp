#include "nclasso/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nclasso/design_lab.hpp"
#include "nclasso/errors.hpp"
#include "loss_kernels.hpp"
#include "overloaded.hpp"

namespace nclasso {

using detail::Overloaded;

namespace {

constexpr double kMaxStep = 1e8;
constexpr double kMinStep = 1e-30;

void check_binary_responses(const LossVariant& variant, const Eigen::VectorXd& y) {
    if (!std::holds_alternative<Binary>(variant)) return;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw InvalidArgument("binary response must be 0 or 1");
}

/// Evaluates R-hat and its gradient from the linear index t = X theta.
class RiskEvaluator {
public:
    RiskEvaluator(const LossVariant& variant, const Eigen::MatrixXd& x, const Eigen::VectorXd& y)
        : variant_(variant), x_(x), y_(y), inv_n_(1.0 / static_cast<double>(x.rows())) {}

    double risk(const Eigen::VectorXd& t) const {
        return detail::with_kernels(variant_, [&](auto value, auto) {
            double sum = 0.0;
            for (Eigen::Index i = 0; i < t.size(); ++i) sum += value(t[i], y_[i]);
            return sum * inv_n_;
        });
    }

    Eigen::VectorXd grad(const Eigen::VectorXd& t) const {
        Eigen::VectorXd w(t.size());
        detail::with_kernels(variant_, [&](auto, auto deriv) {
            for (Eigen::Index i = 0; i < t.size(); ++i) w[i] = deriv(t[i], y_[i]);
            return 0;
        });
        return (x_.transpose() * w) * inv_n_;
    }

    const Eigen::MatrixXd& x() const { return x_; }

private:
    const LossVariant& variant_;
    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    double inv_n_;
};

struct RestartOutcome {
    Eigen::VectorXd theta;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double prox_residual = std::numeric_limits<double>::infinity();
    double step = 0.0;
    std::vector<double> trace;
};

RestartOutcome run_restart(const RiskEvaluator& eval, double lambda, Eigen::VectorXd theta, const FitConfig& cfg) {
    RestartOutcome out;
    Eigen::VectorXd t = eval.x() * theta;
    double objective = eval.risk(t) + lambda * theta.lpNorm<1>();
    if (!std::isfinite(objective)) throw NumericalFailure("non-finite objective at the starting point", 0);
    out.trace.push_back(objective);

    double step = cfg.step.init_step;
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        const Eigen::VectorXd g = eval.grad(t);
        Eigen::VectorXd cand;
        Eigen::VectorXd t_cand;
        double obj_cand = objective;
        double diff_sq = 0.0;
        bool accepted = false;
        while (step >= kMinStep) {
            cand = soft_threshold(theta - step * g, step * lambda);
            diff_sq = (cand - theta).squaredNorm();
            if (diff_sq == 0.0) {
                accepted = true;
                obj_cand = objective;
                break;
            }
            t_cand = eval.x() * cand;
            obj_cand = eval.risk(t_cand) + lambda * cand.lpNorm<1>();
            if (!std::isfinite(obj_cand)) throw NumericalFailure("non-finite objective", it + 1);
            if (obj_cand <= objective - cfg.step.sufficient_decrease / step * diff_sq) {
                accepted = true;
                break;
            }
            step *= cfg.step.shrink;
        }
        out.iterations = it + 1;
        if (!accepted) break;  // step underflow: no descent available at machine precision

        const double residual = std::sqrt(diff_sq) / std::max(1.0, theta.norm());
        const double rel_change = std::abs(objective - obj_cand) / std::max(1.0, std::abs(objective));
        out.prox_residual = residual;
        out.step = step;
        if (residual <= cfg.tol_prox_residual && rel_change <= cfg.tol_objective) {
            out.converged = true;
            break;
        }
        theta = std::move(cand);
        t = std::move(t_cand);
        objective = obj_cand;
        out.trace.push_back(objective);
        step = std::min(step * cfg.step.grow, kMaxStep);
    }
    out.theta = std::move(theta);
    out.objective = objective;
    return out;
}

Eigen::VectorXd warm_ridge_start(const LossVariant& variant, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 double ridge) {
    // Linearise the link at 0 so the ridge fit targets the linear index.
    double offset = 0.0;
    double slope = 1.0;
    if (!std::holds_alternative<Robust>(variant)) {
        const LinkKind kind = std::holds_alternative<Binary>(variant) ? std::get<Binary>(variant).link
                                                                      : std::get<Nls>(variant).link;
        const auto lv = link_eval(kind, 0.0);
        offset = lv.value;
        slope = lv.deriv;
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    const Eigen::VectorXd z = (y.array() - offset) / slope;
    Eigen::MatrixXd gram = x.transpose() * x * inv_n;
    gram.diagonal().array() += ridge;
    return gram.ldlt().solve(x.transpose() * z * inv_n);
}

/// Uniform draw from the l1 ball of the given radius (Dirichlet weights, random signs).
Eigen::VectorXd uniform_l1_ball(Eigen::Index d, double radius, Engine& eng) {
    Eigen::VectorXd e(d + 1);
    for (Eigen::Index j = 0; j <= d; ++j) e[j] = -std::log1p(-uniform01(eng));
    const double total = e.sum();
    Eigen::VectorXd theta(d);
    for (Eigen::Index j = 0; j < d; ++j) theta[j] = ((eng() & 1ULL) ? 1.0 : -1.0) * radius * e[j] / total;
    return theta;
}

}  // namespace

std::string_view formula_tag(ScheduleFormula formula) noexcept {
    switch (formula) {
        case ScheduleFormula::RobustPaper: return "robust_paper";
        case ScheduleFormula::BinaryPaper: return "binary_paper";
        case ScheduleFormula::NlsK: return "nls_k";
        case ScheduleFormula::Manual: return "manual";
    }
    return "manual";
}

double default_nls_k(const Nls& nls, double m_x) {
    const double m_f = loss_constants(nls).m_f;
    return 96.0 * m_f * m_x + 8.0 * (nls.noise_sd * m_f * m_x);
}

double schedule_rate(std::size_t n, std::size_t d) {
    if (n == 0 || d == 0) throw InvalidArgument("schedule needs n, d >= 1");
    const double nd = static_cast<double>(n) * static_cast<double>(d);
    return std::sqrt(std::log(4.0 * nd) / static_cast<double>(n));
}

PenaltySchedule manual_schedule(const ModelSpec& model, double lambda, std::size_t n, std::size_t d, double m_x) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be positive");
    if (!(m_x > 0.0)) throw InvalidArgument("m_x must be positive");
    const double rate = schedule_rate(n, d);
    PenaltySchedule s;
    s.lambda = lambda;
    s.delta_n = std::sqrt(std::log(2.0 * static_cast<double>(d)) / static_cast<double>(n));
    s.r_n = 16.0 * loss_constants(model.variant).lipschitz_l * m_x * rate;
    s.formula = ScheduleFormula::Manual;
    return s;
}

PenaltySchedule lambda_for(const ModelSpec& model, std::size_t n, std::size_t d, double m_x,
                           std::optional<double> nls_k) {
    const double rate = schedule_rate(n, d);
    const LossConstants c = loss_constants(model.variant);
    PenaltySchedule s = std::visit(
        Overloaded{[&](const Robust&) {
                       auto out = manual_schedule(model, 32.0 * c.m_rho * m_x * rate, n, d, m_x);
                       out.formula = ScheduleFormula::RobustPaper;
                       return out;
                   },
                   [&](const Binary&) {
                       auto out = manual_schedule(model, 96.0 * c.m_sigma * m_x * rate, n, d, m_x);
                       out.formula = ScheduleFormula::BinaryPaper;
                       return out;
                   },
                   [&](const Nls& nls) {
                       const double k = nls_k.value_or(default_nls_k(nls, m_x));
                       if (!(k > 0.0)) throw InvalidArgument("nls constant k must be positive");
                       auto out = manual_schedule(model, k * rate, n, d, m_x);
                       out.formula = ScheduleFormula::NlsK;
                       out.nls_k = k;
                       return out;
                   }},
        model.variant);
    if (s.formula != ScheduleFormula::NlsK && s.lambda < 2.0 * s.r_n * (1.0 - 1e-12))
        throw std::logic_error("built-in schedule violates lambda >= 2 r_n");
    return s;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double tau) {
    if (!(tau >= 0.0)) throw InvalidArgument("soft threshold level must be >= 0");
    Eigen::VectorXd out(v.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        const double mag = std::abs(v[j]) - tau;
        out[j] = mag > 0.0 ? std::copysign(mag, v[j]) : 0.0;
    }
    return out;
}

void FitConfig::validate() const {
    if (!(tol_objective > 0.0) || !(tol_prox_residual > 0.0)) throw InvalidArgument("tolerances must be positive");
    if (restarts == 0) throw InvalidArgument("restarts must be >= 1");
    if (!(step.shrink > 0.0 && step.shrink < 1.0)) throw InvalidArgument("backtracking shrink must lie in (0,1)");
    if (!(step.grow >= 1.0)) throw InvalidArgument("backtracking grow must be >= 1");
    if (!(step.init_step > 0.0)) throw InvalidArgument("initial step must be positive");
    if (!(warm_ridge > 0.0)) throw InvalidArgument("warm ridge must be positive");
}

double penalized_objective(const ModelSpec& model, const Dataset& data, const Eigen::VectorXd& theta,
                           double lambda) {
    return empirical_risk(model, data, theta) + lambda * theta.lpNorm<1>();
}

FitResult prox_gradient_fit(const ModelSpec& model, const Dataset& data, const PenaltySchedule& schedule,
                            const FitConfig& config, std::optional<double> r_theta0) {
    config.validate();
    if (!(schedule.lambda > 0.0)) throw InvalidArgument("schedule.lambda must be positive");
    if (data.x.rows() == 0 || data.x.rows() != data.y.size()) throw InvalidArgument("inconsistent dataset");
    check_binary_responses(model.variant, data.y);
    const auto d = data.x.cols();
    if (model.has_truth() && model.theta0.size() != d) throw InvalidArgument("theta0 dimension mismatch");

    const RiskEvaluator eval(model.variant, data.x, data.y);
    const double lambda = schedule.lambda;

    const bool first_is_zero = std::holds_alternative<InitZero>(config.init);
    Engine eng = make_engine(config.seed, "restart");
    double random_radius = 0.0;
    if (model.has_truth()) {
        random_radius = model.theta0.lpNorm<1>();
    } else {
        random_radius = (eval.risk(Eigen::VectorXd::Zero(data.x.rows())) + 1.0) / lambda;
    }

    FitResult best;
    bool have_best = false;
    for (std::size_t r = 0; r < config.restarts; ++r) {
        Eigen::VectorXd start;
        if (r == 0) {
            start = std::visit(Overloaded{[&](const InitZero&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(d); },
                                          [&](const InitWarmRidge& w) -> Eigen::VectorXd {
                                              return warm_ridge_start(model.variant, data.x, data.y, w.ridge);
                                          },
                                          [&](const InitCustom& c) -> Eigen::VectorXd {
                                              if (c.theta.size() != d)
                                                  throw InvalidArgument("custom start has the wrong dimension");
                                              return c.theta;
                                          }},
                               config.init);
        } else if (r == 1) {
            start = first_is_zero ? warm_ridge_start(model.variant, data.x, data.y, config.warm_ridge)
                                  : Eigen::VectorXd::Zero(d);
        } else {
            start = uniform_l1_ball(d, random_radius, eng);
        }
        RestartOutcome o = run_restart(eval, lambda, std::move(start), config);
        if (!have_best || o.objective < best.objective) {
            have_best = true;
            best.theta_hat = std::move(o.theta);
            best.objective = o.objective;
            best.iterations = o.iterations;
            best.converged = o.converged;
            best.prox_residual = o.prox_residual;
            best.step = o.step;
            best.restart_index = r;
            best.objective_trace = std::move(o.trace);
        }
    }

    for (Eigen::Index j = 0; j < d; ++j)
        if (best.theta_hat[j] != 0.0) best.support.push_back(static_cast<std::size_t>(j));
    if (model.has_truth()) {
        const Eigen::VectorXd err = best.theta_hat - model.theta0;
        best.err_l1 = err.lpNorm<1>();
        best.err_l2 = err.norm();
        if (r_theta0) best.in_ball_b = ball_b_check(best.theta_hat, schedule, *r_theta0, model.theta0.lpNorm<1>());
    }
    return best;
}

std::vector<FitResult> lambda_path(const ModelSpec& model, const Dataset& data, std::span<const double> lambdas,
                                   const FitConfig& config) {
    std::vector<FitResult> path;
    path.reserve(lambdas.size());
    FitConfig cfg = config;
    for (const double lambda : lambdas) {
        PenaltySchedule s = manual_schedule(model, lambda, data.n(), data.d(), data.design.m_x());
        path.push_back(prox_gradient_fit(model, data, s, cfg));
        cfg.init = InitCustom{path.back().theta_hat};
    }
    return path;
}

namespace {

/// Lexicographic scan of the grid center + {-w, ..., w}^d (axis 0 slowest).
GridOracleResult scan_grid(const LossVariant& variant, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double lambda, const Eigen::VectorXd& center, double half_width, std::size_t points) {
    const auto d = static_cast<int>(x.cols());
    const auto n = x.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double denom = static_cast<double>(points - 1);
    // written so that the middle point of an odd grid is exactly the center
    auto coord = [&](int axis, std::size_t k) {
        return center[axis] + half_width * (2.0 * static_cast<double>(k) / denom - 1.0);
    };

    GridOracleResult best;
    best.objective_star = std::numeric_limits<double>::infinity();
    best.theta_star = center;
    Eigen::VectorXd theta(d);
    std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(d) + 1, Eigen::VectorXd::Zero(n));

    detail::with_kernels(variant, [&](auto value, auto) {
        // depth-first over axes; partial[a] holds sum_{b<a} theta_b x_b
        auto recurse = [&](auto& self, int axis) -> void {
            for (std::size_t k = 0; k < points; ++k) {
                theta[axis] = coord(axis, k);
                partial[static_cast<std::size_t>(axis) + 1] =
                    partial[static_cast<std::size_t>(axis)] + theta[axis] * x.col(axis);
                if (axis + 1 < d) {
                    self(self, axis + 1);
                    continue;
                }
                const Eigen::VectorXd& t = partial[static_cast<std::size_t>(d)];
                double sum = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) sum += value(t[i], y[i]);
                const double obj = sum * inv_n + lambda * theta.lpNorm<1>();
                ++best.evaluations;
                if (obj < best.objective_star) {
                    best.objective_star = obj;
                    best.theta_star = theta;
                }
            }
        };
        recurse(recurse, 0);
        return 0;
    });
    return best;
}

void check_grid_args(const Dataset& data, double lambda, double box_half_width, std::size_t points_per_axis) {
    if (data.d() > 3) throw UnsupportedDimension("grid oracle supports d <= 3, got d=" + std::to_string(data.d()));
    if (data.d() == 0 || data.n() == 0) throw InvalidArgument("grid oracle needs a nonempty dataset");
    if (points_per_axis < 11) throw InvalidArgument("grid oracle needs at least 11 points per axis");
    if (!(box_half_width > 0.0)) throw InvalidArgument("box half width must be positive");
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
}

}  // namespace

GridOracleResult grid_oracle(const ModelSpec& model, const Dataset& data, double lambda, double box_half_width,
                             std::size_t points_per_axis) {
    check_grid_args(data, lambda, box_half_width, points_per_axis);
    check_binary_responses(model.variant, data.y);
    return scan_grid(model.variant, data.x, data.y, lambda, Eigen::VectorXd::Zero(data.x.cols()), box_half_width,
                     points_per_axis);
}

GridOracleResult grid_oracle_refined(const ModelSpec& model, const Dataset& data, double lambda,
                                     double box_half_width, std::size_t points_per_axis, std::size_t passes) {
    GridOracleResult best = grid_oracle(model, data, lambda, box_half_width, points_per_axis);
    double half_width = box_half_width;
    for (std::size_t p = 0; p < passes; ++p) {
        half_width = 2.0 * half_width / static_cast<double>(points_per_axis - 1);
        GridOracleResult local =
            scan_grid(model.variant, data.x, data.y, lambda, best.theta_star, half_width, points_per_axis);
        local.evaluations += best.evaluations;
        if (local.objective_star < best.objective_star) {
            best = std::move(local);
        } else {
            best.evaluations = local.evaluations;
        }
    }
    return best;
}

double ball_b_radius(const PenaltySchedule& schedule, double r_theta0, double l1_theta0) {
    if (!(schedule.lambda > 0.0)) throw InvalidArgument("ball B needs lambda > 0");
    if (!(r_theta0 >= 0.0)) throw InvalidArgument("R(theta0) estimate must be >= 0");
    return (r_theta0 + 1.0) / schedule.lambda + l1_theta0;
}

bool ball_b_check(const Eigen::VectorXd& theta, const PenaltySchedule& schedule, double r_theta0,
                  double l1_theta0) {
    return theta.lpNorm<1>() <= ball_b_radius(schedule, r_theta0, l1_theta0);
}

}  // namespace nclasso
