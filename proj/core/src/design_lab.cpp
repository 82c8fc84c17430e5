#include "nclasso/design_lab.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "nclasso/errors.hpp"
#include "overloaded.hpp"

namespace nclasso {

using detail::Overloaded;

namespace {

double base_variance(const DesignFamily& family) {
    // variance of the unit-scale base draw
    return std::holds_alternative<Rademacher>(family) ? 1.0 : 1.0 / 3.0;
}

/// Draws unit-scale base entries (+-1 or U(-1,1)) one at a time, buffering
/// 64 random bits for the Rademacher case.
class BaseSampler {
public:
    BaseSampler(const DesignFamily& family, Engine& eng)
        : rademacher_(std::holds_alternative<Rademacher>(family)), eng_(eng) {}

    double next() {
        if (!rademacher_) return 2.0 * uniform01(eng_) - 1.0;
        if (bits_left_ == 0) {
            bits_ = eng_();
            bits_left_ = 64;
        }
        const double v = (bits_ & 1ULL) ? 1.0 : -1.0;
        bits_ >>= 1;
        --bits_left_;
        return v;
    }

private:
    bool rademacher_;
    Engine& eng_;
    std::uint64_t bits_ = 0;
    int bits_left_ = 0;
};

double normal_pdf(double e, double sd) {
    const double z = e / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

double DesignSpec::m_x() const noexcept {
    return std::visit(Overloaded{[](const Rademacher& r) { return r.scale; },
                                 [](const UniformBox& u) { return u.half_width; }},
                      family);
}

void DesignSpec::validate() const {
    if (d == 0) throw InvalidArgument("design dimension d must be >= 1");
    if (n_mix == 0) throw InvalidArgument("n_mix must be >= 1");
    const double m = m_x();
    if (!(m > 0.0) || !std::isfinite(m)) throw InvalidArgument("design scale must be positive");
}

Eigen::MatrixXd design_covariance(const DesignSpec& spec) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.d);
    const double m = spec.m_x();
    const double k = static_cast<double>(spec.n_mix);
    const double unit = base_variance(spec.family) * m * m / (k * k);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index l = 0; l < d; ++l) {
            const auto lag = static_cast<double>(std::abs(j - l));
            cov(j, l) = unit * std::max(0.0, k - lag);
        }
    }
    return cov;
}

double rho_x_of(const DesignSpec& spec) {
    spec.validate();
    if (spec.n_mix == 1) return base_variance(spec.family) * spec.m_x() * spec.m_x();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(design_covariance(spec), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

Eigen::MatrixXd gen_design(const DesignSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw InvalidArgument("gen_design needs n >= 1");
    Engine eng(seed);
    BaseSampler base(spec.family, eng);
    const auto rows = static_cast<Eigen::Index>(n);
    const auto d = static_cast<Eigen::Index>(spec.d);
    const double m = spec.m_x();
    Eigen::MatrixXd x(rows, d);
    if (spec.n_mix == 1) {
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < d; ++j) x(i, j) = m * base.next();
        return x;
    }
    const auto k = static_cast<Eigen::Index>(spec.n_mix);
    const double w = m / static_cast<double>(k);
    std::vector<double> xi(static_cast<std::size_t>(d + k - 1));
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (auto& v : xi) v = base.next();
        double window = std::accumulate(xi.begin(), xi.begin() + k, 0.0);
        for (Eigen::Index j = 0; j < d; ++j) {
            if (j > 0) window += xi[static_cast<std::size_t>(j + k - 1)] - xi[static_cast<std::size_t>(j - 1)];
            x(i, j) = w * window;
        }
    }
    return x;
}

void NoiseSpec::validate() const {
    std::visit(Overloaded{[](const Gaussian& g) {
                              if (!(g.sd >= 0.0) || !std::isfinite(g.sd))
                                  throw InvalidArgument("gaussian noise sd must be >= 0");
                          },
                          [](const Laplace& l) {
                              if (!(l.scale > 0.0)) throw InvalidArgument("laplace scale must be positive");
                          },
                          [](const StudentT& s) {
                              if (!(s.dof > 0.0)) throw InvalidArgument("student-t dof must be positive");
                              if (!(s.scale > 0.0)) throw InvalidArgument("student-t scale must be positive");
                          },
                          [](const ContaminatedGaussian& c) {
                              if (!(c.sd1 > 0.0) || !(c.sd2 > 0.0))
                                  throw InvalidArgument("contaminated gaussian sds must be positive");
                              if (!(c.mix > 0.0 && c.mix < 1.0))
                                  throw InvalidArgument("contaminated gaussian mix must lie in (0,1)");
                          }},
               family);
}

std::string_view NoiseSpec::tag() const noexcept {
    return std::visit(Overloaded{[](const Gaussian&) { return std::string_view("gaussian"); },
                                 [](const Laplace&) { return std::string_view("laplace"); },
                                 [](const StudentT&) { return std::string_view("student"); },
                                 [](const ContaminatedGaussian&) { return std::string_view("contam"); }},
                      family);
}

double noise_density(const NoiseSpec& noise, double e) {
    noise.validate();
    return std::visit(
        Overloaded{[&](const Gaussian& g) {
                       if (g.sd == 0.0) throw InvalidArgument("degenerate gaussian has no density");
                       return normal_pdf(e, g.sd);
                   },
                   [&](const Laplace& l) { return std::exp(-std::abs(e) / l.scale) / (2.0 * l.scale); },
                   [&](const StudentT& s) {
                       const double nu = s.dof;
                       const double z = e / s.scale;
                       const double log_c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                                            0.5 * std::log(nu * std::numbers::pi);
                       return std::exp(log_c - 0.5 * (nu + 1.0) * std::log1p(z * z / nu)) / s.scale;
                   },
                   [&](const ContaminatedGaussian& c) {
                       return (1.0 - c.mix) * normal_pdf(e, c.sd1) + c.mix * normal_pdf(e, c.sd2);
                   }},
        noise.family);
}

double sample_noise(const NoiseSpec& noise, Engine& eng) {
    return std::visit(Overloaded{[&](const Gaussian& g) {
                                     std::normal_distribution<double> normal(0.0, 1.0);
                                     return g.sd * normal(eng);
                                 },
                                 [&](const Laplace& l) {
                                     const double u = uniform01(eng);
                                     const double mag = -std::log1p(-uniform01(eng));
                                     return (u < 0.5 ? -1.0 : 1.0) * l.scale * mag;
                                 },
                                 [&](const StudentT& s) {
                                     std::student_t_distribution<double> t(s.dof);
                                     return s.scale * t(eng);
                                 },
                                 [&](const ContaminatedGaussian& c) {
                                     const bool outlier = uniform01(eng) < c.mix;
                                     std::normal_distribution<double> normal(0.0, 1.0);
                                     return (outlier ? c.sd2 : c.sd1) * normal(eng);
                                 }},
                      noise.family);
}

Eigen::VectorXd gen_theta0(std::size_t d, std::size_t s0, double magnitude, std::uint64_t seed) {
    if (d == 0) throw InvalidArgument("gen_theta0 needs d >= 1");
    if (s0 == 0 || s0 > d)
        throw InvalidArgument("gen_theta0 needs 1 <= s0 <= d (s0=" + std::to_string(s0) +
                              ", d=" + std::to_string(d) + ")");
    if (!(magnitude > 0.0) || !std::isfinite(magnitude)) throw InvalidArgument("magnitude must be positive");
    Engine eng(seed);
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    // partial Fisher-Yates: the first s0 slots form a uniform subset
    for (std::size_t k = 0; k < s0; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(uniform01(eng) * static_cast<double>(d - k));
        std::swap(idx[k], idx[std::min(pick, d - 1)]);
        const double sign = (eng() & 1ULL) ? 1.0 : -1.0;
        theta[static_cast<Eigen::Index>(idx[k])] = sign * magnitude;
    }
    return theta;
}

Eigen::VectorXd gen_response(const ModelSpec& model, const Eigen::MatrixXd& x, const NoiseSpec& noise,
                             std::uint64_t seed) {
    model.validate();
    noise.validate();
    if (x.cols() != model.theta0.size())
        throw InvalidArgument("design has " + std::to_string(x.cols()) + " columns, theta0 has dimension " +
                              std::to_string(model.theta0.size()));
    Engine eng(seed);
    const Eigen::VectorXd index = x * model.theta0;
    Eigen::VectorXd y(index.size());
    std::visit(Overloaded{[&](const Robust&) {
                              for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = index[i] + sample_noise(noise, eng);
                          },
                          [&](const Binary& b) {
                              for (Eigen::Index i = 0; i < y.size(); ++i)
                                  y[i] = uniform01(eng) < link_eval(b.link, index[i]).value ? 1.0 : 0.0;
                          },
                          [&](const Nls& m) {
                              const auto* g = std::get_if<Gaussian>(&noise.family);
                              if (g == nullptr)
                                  throw InvalidArgument("nonlinear least squares requires gaussian noise");
                              if (g->sd != m.noise_sd)
                                  throw InvalidArgument("gaussian noise sd disagrees with the nls noise_sd");
                              std::normal_distribution<double> normal(0.0, 1.0);
                              for (Eigen::Index i = 0; i < y.size(); ++i)
                                  y[i] = link_eval(m.link, index[i]).value + m.noise_sd * normal(eng);
                          }},
               model.variant);
    return y;
}

Dataset make_dataset(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise, std::size_t n,
                     std::uint64_t seed) {
    model.validate();
    design.validate();
    if (static_cast<std::size_t>(model.theta0.size()) != design.d)
        throw InvalidArgument("theta0 dimension does not match design.d");
    Dataset data;
    data.x = gen_design(design, n, derive_seed(seed, "design"));
    data.y = gen_response(model, data.x, noise, derive_seed(seed, "response"));
    data.model = model;
    data.design = design;
    data.noise = noise;
    data.seed = seed;
    return data;
}

}  // namespace nclasso
