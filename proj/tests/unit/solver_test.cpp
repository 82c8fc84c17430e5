#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nclasso/design_lab.hpp"
#include "nclasso/errors.hpp"
#include "nclasso/solver.hpp"
#include "test_support.hpp"

using namespace nclasso;
using testing_support::Gen;

namespace {

Dataset robust_data(std::size_t n, const Eigen::VectorXd& theta0, double noise_sd, std::uint64_t seed) {
    DesignSpec design;
    design.d = static_cast<std::size_t>(theta0.size());
    return make_dataset(ModelSpec{Robust{}, theta0}, design, {Gaussian{noise_sd}}, n, seed);
}

}  // namespace

TEST(Schedule, FrozenLambdaValues) {
    const ModelSpec robust{Robust{}, Eigen::VectorXd::Ones(1)};
    const ModelSpec binary{Binary{}, Eigen::VectorXd::Ones(1)};
    EXPECT_NEAR(lambda_for(robust, 1000, 100).lambda, 3.634391434878236, 1e-12);
    EXPECT_NEAR(lambda_for(binary, 1000, 100).lambda, 2.725793576158677, 1e-12);
    EXPECT_EQ(lambda_for(robust, 1000, 100).formula, ScheduleFormula::RobustPaper);
}

TEST(Schedule, NlsDefaultConstant) {
    EXPECT_DOUBLE_EQ(default_nls_k(Nls{LinkKind::Tanh, 0.5}, 1.0), 100.0);
    const ModelSpec nls{Nls{}, Eigen::VectorXd::Ones(1)};
    const auto s = lambda_for(nls, 1000, 200);
    EXPECT_EQ(s.formula, ScheduleFormula::NlsK);
    EXPECT_DOUBLE_EQ(s.nls_k, 100.0);
    EXPECT_DOUBLE_EQ(s.lambda, 100.0 * schedule_rate(1000, 200));
    EXPECT_DOUBLE_EQ(lambda_for(nls, 1000, 200, 1.0, 50.0).lambda, 50.0 * schedule_rate(1000, 200));
}

// Property: the built-in schedules sit exactly at lambda = 2 r_n.
TEST(ScheduleProperty, DefaultLambdaIsTwiceIncrementRate) {
    Gen gen(1);
    for (int k = 0; k < 50; ++k) {
        const auto n = static_cast<std::size_t>(gen.integer(10, 100000));
        const auto d = static_cast<std::size_t>(gen.integer(1, 5000));
        const double m_x = gen.uniform(0.2, 3.0);
        for (const LossVariant v : {LossVariant{Robust{gen.uniform(0.5, 10.0)}}, LossVariant{Binary{}}}) {
            const auto s = lambda_for(ModelSpec{v, Eigen::VectorXd::Ones(1)}, n, d, m_x);
            EXPECT_NEAR(s.lambda / s.r_n, 2.0, 1e-12);
            EXPECT_DOUBLE_EQ(s.delta_n, std::sqrt(std::log(2.0 * d) / n));
        }
    }
}

TEST(Schedule, RejectsDegenerateInputs) {
    const ModelSpec m{Robust{}, Eigen::VectorXd::Ones(1)};
    EXPECT_THROW(lambda_for(m, 0, 10), InvalidArgument);
    EXPECT_THROW(manual_schedule(m, -1.0, 10, 10), InvalidArgument);
    EXPECT_THROW(lambda_for(ModelSpec{Nls{}, Eigen::VectorXd::Ones(1)}, 10, 10, 1.0, -2.0), InvalidArgument);
}

TEST(SoftThreshold, MatchesOneDimensionalGridSearch) {
    Gen gen(3);
    for (int k = 0; k < 100; ++k) {
        const double v = gen.uniform(-3.0, 3.0);
        const double tau = gen.uniform(0.0, 2.0);
        double best_x = 0.0;
        double best_f = 1e300;
        for (int i = -60000; i <= 60000; ++i) {
            const double x = i * 1e-4;
            const double f = 0.5 * (x - v) * (x - v) + tau * std::abs(x);
            if (f < best_f) {
                best_f = f;
                best_x = x;
            }
        }
        Eigen::VectorXd in(1);
        in[0] = v;
        EXPECT_NEAR(soft_threshold(in, tau)[0], best_x, 1e-4) << "v=" << v << " tau=" << tau;
    }
    EXPECT_THROW(soft_threshold(Eigen::VectorXd::Ones(2), -1.0), InvalidArgument);
}

TEST(Fit, NoiselessRobustRecoversTruth) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(8);
    theta0[1] = 1.0;
    theta0[5] = -1.0;
    const Dataset data = robust_data(300, theta0, 0.0, 5);
    const ModelSpec model{Robust{}, theta0};
    const FitResult res = prox_gradient_fit(model, data, manual_schedule(model, 1e-4, 300, 8), FitConfig{});
    ASSERT_TRUE(res.err_l2.has_value());
    EXPECT_LE(*res.err_l2, 1e-3);
    EXPECT_TRUE(res.converged);
}

// Property: the returned point is a fixed point of the prox-gradient map and
// the accepted objectives never increase.
TEST(FitProperty, FixedPointAndDescent) {
    Gen gen(17);
    for (int trial = 0; trial < 12; ++trial) {
        const int d = gen.integer(2, 15);
        Eigen::VectorXd theta0 = gen_theta0(d, 1 + trial % 2, 1.0, 100 + trial);
        DesignSpec design;
        design.d = d;
        const LossVariant v = trial % 3 == 0 ? LossVariant{Robust{}} : trial % 3 == 1 ? LossVariant{Binary{}} : LossVariant{Nls{}};
        const ModelSpec model{v, theta0};
        const NoiseSpec noise{Gaussian{std::holds_alternative<Nls>(v) ? 0.5 : 1.0}};
        const Dataset data = make_dataset(model, design, noise, 200, 300 + trial);
        const double lambda = gen.uniform(0.005, 0.1);
        FitConfig cfg;
        cfg.seed = trial;
        const FitResult res = prox_gradient_fit(model, data, manual_schedule(model, lambda, 200, d), cfg);
        ASSERT_TRUE(res.converged) << "trial " << trial;
        for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
            EXPECT_LE(res.objective_trace[k], res.objective_trace[k - 1]);
        const Eigen::VectorXd g = empirical_risk_grad(model, data, res.theta_hat);
        const Eigen::VectorXd mapped = soft_threshold(res.theta_hat - res.step * g, res.step * lambda);
        EXPECT_LE((mapped - res.theta_hat).norm(), 1e-6 * std::max(1.0, res.theta_hat.norm())) << "trial " << trial;
        EXPECT_NEAR(res.objective, penalized_objective(model, data, res.theta_hat, lambda), 1e-12);
    }
}

TEST(Fit, DeterministicGivenSeed) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(5);
    theta0[0] = 2.0;
    const Dataset data = robust_data(150, theta0, 1.0, 9);
    const ModelSpec model{Robust{}, theta0};
    FitConfig cfg;
    cfg.seed = 4;
    const auto s = manual_schedule(model, 0.02, 150, 5);
    const FitResult a = prox_gradient_fit(model, data, s, cfg);
    const FitResult b = prox_gradient_fit(model, data, s, cfg);
    EXPECT_EQ(a.theta_hat, b.theta_hat);
    EXPECT_EQ(a.objective, b.objective);
}

TEST(Fit, UnknownTruthLeavesErrorsEmpty) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(3);
    theta0[0] = 1.0;
    const Dataset data = robust_data(100, theta0, 1.0, 1);
    const ModelSpec unknown{Robust{}, {}};
    const FitResult res = prox_gradient_fit(unknown, data, manual_schedule(unknown, 0.05, 100, 3), FitConfig{});
    EXPECT_FALSE(res.err_l1.has_value());
    EXPECT_FALSE(res.in_ball_b.has_value());
}

TEST(Fit, RejectsInvalidConfig) {
    FitConfig cfg;
    cfg.restarts = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = FitConfig{};
    cfg.step.shrink = 1.5;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(LambdaPath, L1NormShrinksAsLambdaGrows) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(10);
    theta0[2] = 1.0;
    theta0[7] = -1.0;
    const Dataset data = robust_data(400, theta0, 0.5, 12);
    const ModelSpec model{Robust{}, theta0};
    const std::vector<double> lambdas = {0.002, 0.005, 0.01, 0.02, 0.04, 0.08};
    const auto path = lambda_path(model, data, lambdas, FitConfig{});
    ASSERT_EQ(path.size(), lambdas.size());
    for (std::size_t k = 1; k < path.size(); ++k)
        EXPECT_LE(path[k].theta_hat.lpNorm<1>(), path[k - 1].theta_hat.lpNorm<1>() + 1e-8);
}

TEST(GridOracle, FinerNestedGridNeverWorse) {
    Gen gen(8);
    for (int trial = 0; trial < 6; ++trial) {
        const int d = 1 + trial % 3;
        Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(d);
        theta0[0] = 0.8;
        const Dataset data = robust_data(120, theta0, 1.0, 50 + trial);
        const ModelSpec model{Robust{}, theta0};
        const double lambda = gen.uniform(0.01, 0.05);
        const auto coarse = grid_oracle(model, data, lambda, 2.0, 21);
        const auto fine = grid_oracle(model, data, lambda, 2.0, 41);
        EXPECT_LE(fine.objective_star, coarse.objective_star);
        EXPECT_EQ(fine.evaluations, static_cast<std::size_t>(std::pow(41, d)));
        const auto refined = grid_oracle_refined(model, data, lambda, 2.0, 21, 3);
        EXPECT_LE(refined.objective_star, coarse.objective_star);
    }
}

TEST(GridOracle, SolverIsNoWorseThanGrid) {
    for (int d = 1; d <= 3; ++d) {
        Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(d);
        theta0[0] = 1.0;
        const Dataset data = robust_data(200, theta0, 1.0, 70 + d);
        const ModelSpec model{Robust{}, theta0};
        const double lambda = 0.03;
        const FitResult fit = prox_gradient_fit(model, data, manual_schedule(model, lambda, 200, d), FitConfig{});
        const auto grid = grid_oracle_refined(model, data, lambda, 2.0, 41, 4);
        EXPECT_LE(fit.objective, grid.objective_star + 1e-6 * (1.0 + std::abs(grid.objective_star))) << "d=" << d;
    }
}

TEST(GridOracle, CenterIsOnTheGrid) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(2);
    theta0[0] = 1.0;
    const Dataset data = robust_data(50, theta0, 1.0, 2);
    const ModelSpec model{Robust{}, theta0};
    // a huge penalty makes 0 the unique minimiser
    const auto grid = grid_oracle(model, data, 100.0, 1.0, 11);
    EXPECT_EQ(grid.theta_star, Eigen::VectorXd::Zero(2));
    EXPECT_DOUBLE_EQ(grid.objective_star, empirical_risk(model, data, Eigen::VectorXd::Zero(2)));
}

TEST(GridOracle, RejectsUnsupportedInputs) {
    const Eigen::VectorXd theta0 = Eigen::VectorXd::Ones(4);
    const Dataset data = robust_data(20, theta0, 1.0, 1);
    const ModelSpec model{Robust{}, theta0};
    EXPECT_THROW(grid_oracle(model, data, 0.1, 1.0, 21), UnsupportedDimension);
    const Dataset small = robust_data(20, Eigen::VectorXd::Ones(2), 1.0, 1);
    EXPECT_THROW(grid_oracle(ModelSpec{Robust{}, Eigen::VectorXd::Ones(2)}, small, 0.1, 1.0, 5), InvalidArgument);
    EXPECT_THROW(grid_oracle(ModelSpec{Robust{}, Eigen::VectorXd::Ones(2)}, small, 0.1, 0.0, 21), InvalidArgument);
}

TEST(BallB, RadiusAndMembership) {
    const ModelSpec model{Robust{}, Eigen::VectorXd::Ones(1)};
    const auto s = manual_schedule(model, 0.5, 100, 10);
    EXPECT_DOUBLE_EQ(ball_b_radius(s, 0.2, 3.0), 1.2 / 0.5 + 3.0);
    Eigen::VectorXd inside = Eigen::VectorXd::Zero(3);
    inside[0] = 5.4;
    EXPECT_TRUE(ball_b_check(inside, s, 0.2, 3.0));
    inside[1] = 0.01;
    EXPECT_FALSE(ball_b_check(inside, s, 0.2, 3.0));
}

TEST(BallB, DefaultScheduleFitsLandInside) {
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(20);
    theta0[3] = 1.0;
    const Dataset data = robust_data(500, theta0, 1.0, 31);
    const ModelSpec model{Robust{}, theta0};
    const FitResult res = prox_gradient_fit(model, data, lambda_for(model, 500, 20), FitConfig{}, 0.12);
    ASSERT_TRUE(res.in_ball_b.has_value());
    EXPECT_TRUE(*res.in_ball_b);
}
