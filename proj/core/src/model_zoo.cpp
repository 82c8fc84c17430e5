#include "nclasso/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nclasso/design_lab.hpp"
#include "nclasso/errors.hpp"
#include "overloaded.hpp"

namespace nclasso {

namespace {

using detail::Overloaded;

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be finite");
}

void check_t0(double t0) {
    if (!(t0 > 0.0) || !std::isfinite(t0)) throw InvalidArgument("Tukey cutoff t0 must be positive and finite");
}

void check_binary_response(double y) {
    if (y != 0.0 && y != 1.0) throw InvalidArgument("binary response must be 0 or 1, got " + std::to_string(y));
}

void check_dims(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
    if (x.rows() != y.size())
        throw InvalidArgument("design has " + std::to_string(x.rows()) + " rows but response has " +
                              std::to_string(y.size()));
    if (x.cols() != theta.size())
        throw InvalidArgument("theta has dimension " + std::to_string(theta.size()) + ", design has " +
                              std::to_string(x.cols()) + " columns");
}

}  // namespace

std::string_view link_tag(LinkKind kind) noexcept {
    return kind == LinkKind::Logistic ? "logistic" : "tanh";
}

std::string_view model_tag(const LossVariant& variant) noexcept {
    return std::visit(Overloaded{[](const Robust&) { return std::string_view("robust"); },
                                 [](const Binary&) { return std::string_view("binary"); },
                                 [](const Nls&) { return std::string_view("nls"); }},
                      variant);
}

std::size_t ModelSpec::s0() const noexcept {
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < theta0.size(); ++j) count += theta0[j] != 0.0 ? 1 : 0;
    return count;
}

std::string_view ModelSpec::tag() const noexcept { return model_tag(variant); }

void ModelSpec::validate() const {
    std::visit(Overloaded{[](const Robust& r) { check_t0(r.t0); },
                          [](const Binary& b) {
                              // the link has to be a probability
                              if (b.link != LinkKind::Logistic)
                                  throw InvalidArgument("binary model requires a [0,1]-valued link (logistic)");
                          },
                          [](const Nls& m) {
                              if (!(m.noise_sd >= 0.0) || !std::isfinite(m.noise_sd))
                                  throw InvalidArgument("nls noise_sd must be >= 0");
                          }},
               variant);
    if (theta0.size() == 0) throw InvalidArgument("theta0 is required");
    if (!theta0.allFinite()) throw InvalidArgument("theta0 must be finite");
    if (s0() == 0) throw InvalidArgument("theta0 must have at least one nonzero entry");
}

double tukey_rho(double t, double t0) {
    require_finite(t, "t");
    check_t0(t0);
    const double u = t / t0;
    if (std::abs(u) > 1.0) return 1.0;
    const double w = 1.0 - u * u;
    return 1.0 - w * w * w;
}

double tukey_rho_deriv(double t, double t0) {
    require_finite(t, "t");
    check_t0(t0);
    const double u = t / t0;
    if (std::abs(u) >= 1.0) return 0.0;
    const double w = 1.0 - u * u;
    return 6.0 * t / (t0 * t0) * w * w;
}

double tukey_rho_deriv_max(double t0) {
    check_t0(t0);
    return 96.0 / (25.0 * std::sqrt(5.0)) / t0;
}

LinkValue link_eval(LinkKind kind, double t) {
    require_finite(t, "t");
    if (kind == LinkKind::Logistic) {
        const double e = std::exp(-std::abs(t));
        const double value = t >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        return {value, e / ((1.0 + e) * (1.0 + e))};
    }
    const double a = std::exp(-2.0 * std::abs(t));
    return {std::tanh(t), 4.0 * a / ((1.0 + a) * (1.0 + a))};
}

double link_deriv_max(LinkKind kind) noexcept { return kind == LinkKind::Logistic ? 0.25 : 1.0; }

double link_abs_max(LinkKind) noexcept { return 1.0; }

LossConstants loss_constants(const LossVariant& variant) {
    return std::visit(Overloaded{[](const Robust& r) {
                                     LossConstants c;
                                     // sup|rho| = 1 for the bisquare
                                     c.m_rho = std::max(1.0, tukey_rho_deriv_max(r.t0));
                                     c.lipschitz_l = c.m_rho;
                                     return c;
                                 },
                                 [](const Binary& b) {
                                     LossConstants c;
                                     c.m_sigma = link_deriv_max(b.link);
                                     c.lipschitz_l = 3.0 * c.m_sigma;
                                     return c;
                                 },
                                 [](const Nls& m) {
                                     LossConstants c;
                                     c.m_f = std::max(link_abs_max(m.link), link_deriv_max(m.link));
                                     c.lipschitz_l = 4.0 * c.m_f * c.m_f;
                                     return c;
                                 }},
                      variant);
}

double loss_value(const LossVariant& variant, double t, double y) {
    require_finite(y, "y");
    return std::visit(Overloaded{[&](const Robust& r) { return tukey_rho(y - t, r.t0); },
                                 [&](const Binary& b) {
                                     check_binary_response(y);
                                     const double r = y - link_eval(b.link, t).value;
                                     return r * r;
                                 },
                                 [&](const Nls& m) {
                                     const double r = y - link_eval(m.link, t).value;
                                     return r * r;
                                 }},
                      variant);
}

double loss_value(const ModelSpec& model, double t, double y) { return loss_value(model.variant, t, y); }

double loss_deriv(const LossVariant& variant, double t, double y) {
    require_finite(y, "y");
    return std::visit(Overloaded{[&](const Robust& r) { return -tukey_rho_deriv(y - t, r.t0); },
                                 [&](const Binary& b) {
                                     check_binary_response(y);
                                     const auto [v, dv] = link_eval(b.link, t);
                                     return -2.0 * (y - v) * dv;
                                 },
                                 [&](const Nls& m) {
                                     const auto [v, dv] = link_eval(m.link, t);
                                     return -2.0 * (y - v) * dv;
                                 }},
                      variant);
}

double empirical_risk(const LossVariant& variant, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& theta) {
    check_dims(x, y, theta);
    if (x.rows() == 0) throw InvalidArgument("empirical risk of an empty sample");
    const Eigen::VectorXd t = x * theta;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) sum += loss_value(variant, t[i], y[i]);
    return sum / static_cast<double>(t.size());
}

Eigen::VectorXd empirical_risk_grad(const LossVariant& variant, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& theta) {
    check_dims(x, y, theta);
    if (x.rows() == 0) throw InvalidArgument("empirical risk of an empty sample");
    const Eigen::VectorXd t = x * theta;
    Eigen::VectorXd w(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) w[i] = loss_deriv(variant, t[i], y[i]);
    return x.transpose() * w / static_cast<double>(t.size());
}

double empirical_risk(const ModelSpec& model, const Dataset& data, const Eigen::VectorXd& theta) {
    return empirical_risk(model.variant, data.x, data.y, theta);
}

Eigen::VectorXd empirical_risk_grad(const ModelSpec& model, const Dataset& data, const Eigen::VectorXd& theta) {
    return empirical_risk_grad(model.variant, data.x, data.y, theta);
}

MonteCarloEstimate risk_on_sample(const ModelSpec& model, const Dataset& sample, const Eigen::VectorXd& theta) {
    check_dims(sample.x, sample.y, theta);
    const auto n = sample.x.rows();
    if (n < 2) throw InvalidArgument("Monte Carlo risk needs at least two draws");
    const Eigen::VectorXd t = sample.x * theta;
    double mean = 0.0;
    double m2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = loss_value(model.variant, t[i], sample.y[i]);
        const double delta = v - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (v - mean);
    }
    const double var = m2 / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n)), static_cast<std::size_t>(n)};
}

MonteCarloEstimate true_risk_oracle(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                                    const Eigen::VectorXd& theta, std::size_t mc_n, std::uint64_t seed) {
    if (mc_n < 100) throw InvalidArgument("true_risk_oracle needs mc_n >= 100");
    model.validate();
    if (static_cast<std::size_t>(theta.size()) != design.d || model.theta0.size() != theta.size())
        throw InvalidArgument("theta, theta0 and design dimension disagree");
    const Dataset sample = make_dataset(model, design, noise, mc_n, derive_seed(seed, "risk-oracle"));
    return risk_on_sample(model, sample, theta);
}

}  // namespace nclasso
