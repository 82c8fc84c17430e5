#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

namespace nclasso {

struct Dataset;
struct DesignSpec;
struct NoiseSpec;

enum class LinkKind { Logistic, Tanh };

/// Tukey bisquare regression, loss(t, y) = rho(y - t).
struct Robust {
    double t0 = 4.685;
};

/// Squared-error binary classification, P(Y=1|X) = link(X'theta0), loss = (y - link(t))^2.
struct Binary {
    LinkKind link = LinkKind::Logistic;
};

/// Nonlinear least squares, Y = f(X'theta0) + N(0, noise_sd^2), loss = (y - f(t))^2.
struct Nls {
    LinkKind link = LinkKind::Tanh;
    double noise_sd = 0.5;
};

using LossVariant = std::variant<Robust, Binary, Nls>;

/// One of the three estimation problems together with the true parameter.
///
/// `theta0` may be empty when the truth is unknown (fitting data read from a
/// file); every generator and every oracle that needs the truth calls
/// `validate()` first, which requires a nonzero theta0.
struct ModelSpec {
    LossVariant variant;
    Eigen::VectorXd theta0;

    bool has_truth() const noexcept { return theta0.size() > 0; }
    std::size_t s0() const noexcept;
    std::string_view tag() const noexcept;
    void validate() const;
};

std::string_view model_tag(const LossVariant& variant) noexcept;
std::string_view link_tag(LinkKind kind) noexcept;

/// Bounds used by the penalty schedules. Entries that do not apply to the
/// model at hand are zero.
struct LossConstants {
    double m_rho = 0.0;        ///< sup|rho| v sup|rho'| (Robust)
    double m_sigma = 0.0;      ///< sup link' (Binary)
    double m_f = 0.0;          ///< sup|f| v sup f' (Nls)
    double lipschitz_l = 0.0;  ///< Lipschitz constant of the loss in t (Nls: of the bounded part)
};

LossConstants loss_constants(const LossVariant& variant);

// Tukey bisquare and its derivative.
double tukey_rho(double t, double t0);
double tukey_rho_deriv(double t, double t0);
/// sup_t |rho'(t)| = 96 / (25 sqrt(5) t0), attained at t = t0 / sqrt(5).
double tukey_rho_deriv_max(double t0);

struct LinkValue {
    double value;
    double deriv;
};

LinkValue link_eval(LinkKind kind, double t);
/// sup_t link'(t); both supported links are maximally steep at 0.
double link_deriv_max(LinkKind kind) noexcept;
/// sup_t |link(t)|.
double link_abs_max(LinkKind kind) noexcept;

double loss_value(const LossVariant& variant, double t, double y);
/// d loss(t, y) / dt.
double loss_deriv(const LossVariant& variant, double t, double y);

double loss_value(const ModelSpec& model, double t, double y);

double empirical_risk(const ModelSpec& model, const Dataset& data, const Eigen::VectorXd& theta);
Eigen::VectorXd empirical_risk_grad(const ModelSpec& model, const Dataset& data,
                                    const Eigen::VectorXd& theta);

/// Empirical risk of a design/response pair; the building block of the Dataset overloads.
double empirical_risk(const LossVariant& variant, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& theta);
Eigen::VectorXd empirical_risk_grad(const LossVariant& variant, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y, const Eigen::VectorXd& theta);

/// Mean of a Monte Carlo sample with its standard error.
struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

/// Sample mean and standard error of the loss over the rows of `sample`.
MonteCarloEstimate risk_on_sample(const ModelSpec& model, const Dataset& sample, const Eigen::VectorXd& theta);

/// Monte Carlo estimate of R(theta) = E[loss(X'theta, Y)] from a fresh sample
/// of `mc_n` draws of (X, Y) generated under (model, design, noise, seed).
MonteCarloEstimate true_risk_oracle(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                                    const Eigen::VectorXd& theta, std::size_t mc_n, std::uint64_t seed);

}  // namespace nclasso
