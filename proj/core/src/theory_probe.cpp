#include "nclasso/theory_probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "nclasso/errors.hpp"
#include "nclasso/rng.hpp"
#include "loss_kernels.hpp"
#include "overloaded.hpp"

namespace nclasso {

using detail::Overloaded;

namespace {

constexpr double kSlackSigmas = 5.0;

/// Mean and standard error by Welford's recurrence.
class RunningMean {
public:
    void add(double v) {
        ++n_;
        const double delta = v - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (v - mean_);
    }
    double mean() const { return mean_; }
    double std_error() const {
        if (n_ < 2) return 0.0;
        return std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
    }
    std::size_t count() const { return n_; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
            out.push_back(c);
        } else if (static_cast<unsigned char>(c) < 0x20) {
            out += fmt::format("\\u{:04x}", static_cast<int>(c));
        } else {
            out.push_back(c);
        }
    }
    return out;
}

bool has_density(const NoiseSpec& noise) {
    if (const auto* g = std::get_if<Gaussian>(&noise.family)) return g->sd > 0.0;
    return true;
}

LinkKind link_of(const LossVariant& variant) {
    if (const auto* b = std::get_if<Binary>(&variant)) return b->link;
    return std::get<Nls>(variant).link;
}

Eigen::VectorXd random_unit(Eigen::Index d, Engine& eng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd u(d);
    double norm = 0.0;
    while (norm == 0.0) {
        for (Eigen::Index j = 0; j < d; ++j) u[j] = normal(eng);
        norm = u.norm();
    }
    return u / norm;
}

/// Population draw shared by every direction of a probe (common random numbers).
struct Population {
    Eigen::MatrixXd x;
    Eigen::VectorXd eps;     ///< robust noise draws, empty otherwise
    Eigen::VectorXd index0;  ///< X theta0
};

Population draw_population(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                           std::size_t mc_n, std::uint64_t seed) {
    Population pop;
    pop.x = gen_design(design, mc_n, derive_seed(seed, "population-design"));
    pop.index0 = pop.x * model.theta0;
    if (std::holds_alternative<Robust>(model.variant)) {
        Engine eng = make_engine(seed, "population-noise");
        pop.eps.resize(static_cast<Eigen::Index>(mc_n));
        for (Eigen::Index i = 0; i < pop.eps.size(); ++i) pop.eps[i] = sample_noise(noise, eng);
    }
    return pop;
}

void check_probe_model(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                       std::size_t mc_n) {
    model.validate();
    design.validate();
    noise.validate();
    if (static_cast<std::size_t>(model.theta0.size()) != design.d)
        throw InvalidArgument("theta0 dimension does not match design.d");
    if (mc_n < 100) throw InvalidArgument("probe needs mc_n >= 100");
    if (std::holds_alternative<Nls>(model.variant)) {
        const auto* g = std::get_if<Gaussian>(&noise.family);
        if (g == nullptr || g->sd != std::get<Nls>(model.variant).noise_sd)
            throw InvalidArgument("nls probe needs gaussian noise matching noise_sd");
    }
}

/// Picks, among per-direction (ratio, se) pairs, the one furthest below
/// `bound` in slack-adjusted terms.
struct WorstRatio {
    double ratio = std::numeric_limits<double>::infinity();
    double se = 0.0;
    double deficit = -std::numeric_limits<double>::infinity();

    void offer(double r, double s, double bound) {
        const double d = bound - r - kSlackSigmas * s;
        if (d > deficit) {
            deficit = d;
            ratio = r;
            se = s;
        }
    }
};

}  // namespace

ProbeReport ProbeReport::monte_carlo(std::string name, double measured, double bound, double std_error,
                                     std::size_t n_samples, std::uint64_t seed) {
    ProbeReport r;
    r.check_name = std::move(name);
    r.measured = measured;
    r.bound = bound;
    r.margin = bound - measured;
    r.mc_std_error = std_error;
    r.n_samples = n_samples;
    r.seed = seed;
    r.passed = measured <= bound + kSlackSigmas * std_error;
    return r;
}

ProbeReport ProbeReport::deterministic(std::string name, double measured, double bound, std::uint64_t seed) {
    ProbeReport r;
    r.check_name = std::move(name);
    r.measured = measured;
    r.bound = bound;
    r.margin = bound - measured;
    r.seed = seed;
    r.passed = measured <= bound;
    return r;
}

std::string to_json_line(const ProbeReport& r) {
    return fmt::format(
        "{{\"check_name\":\"{}\",\"passed\":{},\"measured\":{:.17g},\"bound\":{:.17g},\"margin\":{:.17g},"
        "\"mc_std_error\":{:.17g},\"n_samples\":{},\"seed\":{}}}",
        json_escape(r.check_name), r.passed ? "true" : "false", r.measured, r.bound, r.margin, r.mc_std_error,
        r.n_samples, r.seed);
}

void write_probe_reports(std::ostream& out, const std::vector<ProbeReport>& reports) {
    for (const auto& r : reports) out << to_json_line(r) << '\n';
}

void write_probe_reports(const std::string& path, const std::vector<ProbeReport>& reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open probe report for writing", path);
    write_probe_reports(out, reports);
    out.flush();
    if (!out) throw IoError("failed writing probe report", path);
}

std::vector<ProbeReport> read_probe_reports(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open probe report", path);
    std::vector<ProbeReport> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ProbeReport r;
            r.check_name = j.at("check_name").get<std::string>();
            r.passed = j.at("passed").get<bool>();
            r.measured = j.at("measured").get<double>();
            r.bound = j.at("bound").get<double>();
            r.margin = j.at("margin").get<double>();
            r.mc_std_error = j.at("mc_std_error").get<double>();
            r.n_samples = j.at("n_samples").get<std::size_t>();
            r.seed = j.at("seed").get<std::uint64_t>();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("malformed probe record: ") + e.what(), path);
        }
    }
    return out;
}

GEstimate estimate_g(const NoiseSpec& noise, double t0, double t, const GMethod& method) {
    noise.validate();
    if (!(t0 > 0.0) || !std::isfinite(t0)) throw InvalidArgument("t0 must be positive");
    if (!std::isfinite(t)) throw InvalidArgument("t must be finite");

    auto monte_carlo = [&](const MonteCarlo& mc) {
        if (mc.n < 2) throw InvalidArgument("Monte Carlo g needs n >= 2");
        Engine eng = make_engine(mc.seed, "g-estimate");
        RunningMean acc;
        for (std::size_t i = 0; i < mc.n; ++i) acc.add(detail::tukey_deriv_fast(t + sample_noise(noise, eng), t0));
        GEstimate out;
        out.value = acc.mean();
        out.std_error = acc.std_error();
        out.used_quadrature = false;
        return out;
    };

    if (const auto* mc = std::get_if<MonteCarlo>(&method)) return monte_carlo(*mc);
    const double abs_tol = std::get<Quadrature>(method).abs_tol;
    if (!(abs_tol > 0.0)) throw InvalidArgument("quadrature tolerance must be positive");

    if (!has_density(noise)) {
        GEstimate out = monte_carlo(MonteCarlo{});
        out.fell_back = true;
        return out;
    }
    // rho'(t + e) vanishes unless e lies in [-t0 - t, t0 - t]; split at the
    // density's mode, where Laplace has a kink.
    const double lo = -t0 - t;
    const double hi = t0 - t;
    auto integrand = [&](double e) { return detail::tukey_deriv_fast(t + e, t0) * noise_density(noise, e); };
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    double value = 0.0;
    double error = 0.0;
    auto piece = [&](double a, double b) {
        if (!(b > a)) return;
        double err = 0.0;
        value += GK::integrate(integrand, a, b, 20, 1e-14, &err);
        error += err;
    };
    if (lo < 0.0 && 0.0 < hi) {
        piece(lo, 0.0);
        piece(0.0, hi);
    } else {
        piece(lo, hi);
    }
    if (!(error <= abs_tol) || !std::isfinite(value)) {
        GEstimate out = monte_carlo(MonteCarlo{1000000, 0});
        out.fell_back = true;
        return out;
    }
    GEstimate out;
    out.value = value;
    return out;
}

double estimate_g_prime_zero(const NoiseSpec& noise, double t0) {
    const double h = 1e-4 * t0;
    return (estimate_g(noise, t0, h).value - estimate_g(noise, t0, -h).value) / (2.0 * h);
}

double estimate_big_l(const NoiseSpec& noise, double t0, double s, std::size_t grid) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("estimate_big_l needs s > 0");
    if (grid < 100) throw InvalidArgument("estimate_big_l needs grid >= 100");
    // Grid points come from one fixed log lattice anchored at 1e-6 t0 (so the
    // sets are nested in s), plus the endpoint s itself.
    const double per_decade = static_cast<double>(grid - 1) / 3.0;
    const double anchor = 1e-6 * t0;
    double best = estimate_g(noise, t0, s).value / s;
    for (std::size_t k = 0;; ++k) {
        const double t = anchor * std::pow(10.0, static_cast<double>(k) / per_decade);
        if (t >= s) break;
        best = std::min(best, estimate_g(noise, t0, t).value / t);
    }
    return best;
}

double robust_s_gamma(double gamma, double m_x, double rho_x) {
    if (!(gamma > 0.0) || !(m_x > 0.0) || !(rho_x > 0.0)) throw InvalidArgument("curvature inputs must be positive");
    return 2.0 * std::sqrt(m_x * m_x * gamma * gamma * std::log(8.0 * std::numbers::sqrt2 * m_x * m_x / rho_x));
}

double link_s_gamma0(double gamma, double m_0, double m_x, double rho_x) {
    if (!(gamma > 0.0) || !(m_0 > 0.0) || !(m_x > 0.0) || !(rho_x > 0.0))
        throw InvalidArgument("curvature inputs must be positive");
    return 2.0 * m_x * std::max(gamma, m_0) * std::sqrt(std::log(16.0 * std::numbers::sqrt2 * m_x * m_x / rho_x));
}

double curvature_constant(const LossVariant& variant, const CurvatureSpec& spec, double m_x, double rho_x,
                          const NoiseSpec& noise) {
    if (!(spec.gamma > 0.0) || !(spec.eta_star > 0.0)) throw InvalidArgument("gamma and eta_star must be positive");
    if (const auto* r = std::get_if<Robust>(&variant)) {
        const double s = robust_s_gamma(spec.gamma, m_x, rho_x);
        return estimate_big_l(noise, r->t0, s) * rho_x / 2.0;
    }
    const double s = link_s_gamma0(spec.gamma, spec.m_0, m_x, rho_x);
    // both links have derivatives decreasing in |t|, so the inf sits at the endpoint
    const double deriv = link_eval(link_of(variant), 2.0 * s).deriv;
    return deriv * deriv * rho_x;
}

ProbeReport gradient_identification_check(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                                          std::size_t n_dirs, double gamma, std::size_t mc_n, std::uint64_t seed) {
    check_probe_model(model, design, noise, mc_n);
    if (n_dirs < 10) throw InvalidArgument("identification check needs n_dirs >= 10");
    if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");

    const double m_x = design.m_x();
    const double rho_x = rho_x_of(design);
    const CurvatureSpec spec{gamma, gamma, model.theta0.norm()};
    const double c = curvature_constant(model.variant, spec, m_x, rho_x, noise);
    const Population pop = draw_population(model, design, noise, mc_n, seed);
    Engine dir_eng = make_engine(seed, "identification-directions");

    WorstRatio worst;
    bool inner_ok = true;
    const auto d = static_cast<Eigen::Index>(design.d);
    for (std::size_t k = 0; k < n_dirs; ++k) {
        const double delta = gamma * static_cast<double>(k + 1) / static_cast<double>(n_dirs);
        const Eigen::VectorXd a = pop.x * (delta * random_unit(d, dir_eng));
        RunningMean acc;
        if (const auto* r = std::get_if<Robust>(&model.variant)) {
            // E[rho'(eps) a] = 0 serves as a control variate
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                const double e = pop.eps[i];
                acc.add(-(detail::tukey_deriv_fast(e - a[i], r->t0) - detail::tukey_deriv_fast(e, r->t0)) * a[i]);
            }
        } else {
            // conditional on X the score is 2 f'(X'theta)(f(X'theta) - f(X'theta0))
            const LinkKind kind = link_of(model.variant);
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                const auto lv = detail::link_fast(kind, pop.index0[i] + a[i]);
                const double f0 = detail::link_value_fast(kind, pop.index0[i]);
                acc.add(2.0 * lv.deriv * (lv.value - f0) * a[i]);
            }
        }
        if (acc.mean() < -kSlackSigmas * acc.std_error()) inner_ok = false;
        const double d2 = delta * delta;
        worst.offer(acc.mean() / d2, acc.std_error() / d2, c);
    }
    auto report = ProbeReport::monte_carlo(fmt::format("identification[{},gamma={}]", model.tag(), gamma),
                                           -worst.ratio, -c, worst.se, mc_n, seed);
    report.passed = report.passed && inner_ok;
    return report;
}

ProbeReport increment_ratio_probe(const ModelSpec& model, const Dataset& data, const PenaltySchedule& schedule,
                                  std::size_t n_probe, std::size_t oracle_mc_n, std::uint64_t seed) {
    model.validate();
    if (n_probe < 100) throw InvalidArgument("increment probe needs n_probe >= 100");
    if (oracle_mc_n < 100) throw InvalidArgument("increment probe needs oracle_mc_n >= 100");
    if (model.theta0.size() != data.x.cols()) throw InvalidArgument("theta0 dimension does not match the data");
    if (!(schedule.delta_n > 0.0)) throw InvalidArgument("schedule.delta_n must be positive");

    const Dataset pop = make_dataset(model, data.design, data.noise, oracle_mc_n, derive_seed(seed, "increment-oracle"));
    const Eigen::VectorXd& theta0 = model.theta0;
    const auto d = theta0.size();

    // per-observation losses at theta0, reused for every probe point
    auto losses = [&](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
        const Eigen::VectorXd t = x * theta;
        Eigen::VectorXd out(t.size());
        detail::with_kernels(model.variant, [&](auto value, auto) {
            for (Eigen::Index i = 0; i < t.size(); ++i) out[i] = value(t[i], y[i]);
            return 0;
        });
        return out;
    };
    const Eigen::VectorXd pop_loss0 = losses(pop.x, pop.y, theta0);
    const double emp_risk0 = losses(data.x, data.y, theta0).mean();
    const double radius = ball_b_radius(schedule, pop_loss0.mean(), theta0.lpNorm<1>());

    Engine eng = make_engine(seed, "increment-points");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double r_lo = std::log(schedule.delta_n / 10.0);
    const double r_hi = std::log(radius);

    double best_ratio = 0.0;  // theta = theta0 contributes ratio 0
    double best_se = 0.0;
    for (std::size_t k = 1; k < n_probe; ++k) {
        const double r = std::exp(r_lo + (r_hi - r_lo) * uniform01(eng));
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd theta;
        switch (k % 3) {
            case 0: {  // sparse perturbation of theta0
                const auto support = 1 + static_cast<Eigen::Index>(uniform01(eng) * 5.0);
                for (Eigen::Index s = 0; s < support; ++s) {
                    const auto j = std::min<Eigen::Index>(d - 1, static_cast<Eigen::Index>(uniform01(eng) * static_cast<double>(d)));
                    dir[j] += (eng() & 1ULL) ? 1.0 : -1.0;
                }
                if (dir.lpNorm<1>() == 0.0) dir[0] = 1.0;
                theta = theta0 + r * dir / dir.lpNorm<1>();
                break;
            }
            case 1: {  // dense point at l1 radius r
                for (Eigen::Index j = 0; j < d; ++j) dir[j] = normal(eng);
                theta = r * dir / dir.lpNorm<1>();
                break;
            }
            default: {  // dense perturbation of theta0
                for (Eigen::Index j = 0; j < d; ++j) dir[j] = normal(eng);
                theta = theta0 + r * dir / dir.lpNorm<1>();
                break;
            }
        }
        const double l1 = theta.lpNorm<1>();
        if (l1 > radius) theta *= radius / l1;

        const double dist = (theta - theta0).lpNorm<1>();
        if (dist == 0.0) continue;
        const Eigen::VectorXd diff = losses(pop.x, pop.y, theta) - pop_loss0;
        RunningMean acc;
        for (Eigen::Index i = 0; i < diff.size(); ++i) acc.add(diff[i]);
        const double emp_diff = losses(data.x, data.y, theta).mean() - emp_risk0;
        const double denom = std::max(dist, schedule.delta_n);
        const double ratio = std::abs(emp_diff - acc.mean()) / denom;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_se = acc.std_error() / denom;
        }
    }
    return ProbeReport::monte_carlo(fmt::format("increment_ratio[{},n={},d={}]", model.tag(), data.n(), data.d()),
                                    best_ratio, schedule.r_n, best_se, oracle_mc_n, seed);
}

ProbeReport lemma_max_average_check(double m, std::size_t n, std::size_t d, std::size_t reps, std::uint64_t seed,
                                    MaxAverageVariant variant) {
    if (!(m > 0.0) || !std::isfinite(m)) throw InvalidArgument("bound m must be positive");
    if (n == 0 || d == 0) throw InvalidArgument("max-average check needs n, d >= 1");
    if (reps < 200) throw InvalidArgument("max-average check needs reps >= 200");

    const bool gaussian = variant == MaxAverageVariant::GaussianTimesBounded;
    RunningMean acc;
    std::vector<double> sums(d);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t rep = 0; rep < reps; ++rep) {
        Engine eng = make_engine(seed, "max-average", rep);
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double c = gaussian ? m * normal(eng) : m;
            for (std::size_t j0 = 0; j0 < d; j0 += 64) {
                std::uint64_t bits = eng();
                const std::size_t end = std::min(d, j0 + 64);
                for (std::size_t j = j0; j < end; ++j, bits >>= 1)
                    sums[j] += (bits & 1ULL) ? c : -c;
            }
        }
        double mx = 0.0;
        for (const double s : sums) mx = std::max(mx, std::abs(s));
        acc.add(mx / static_cast<double>(n));
    }
    const double bound = m * std::sqrt(2.0 * std::log(2.0 * static_cast<double>(d)) / static_cast<double>(n));
    return ProbeReport::monte_carlo(
        fmt::format("max_average[{},n={},d={}]", gaussian ? "gaussian_x_bounded" : "bounded", n, d), acc.mean(),
        bound, acc.std_error(), reps, seed);
}

ProbeReport lemma_subgaussian_truncation_check(double v, double v_prime, double delta, std::size_t mc_n,
                                               std::uint64_t seed, Coupling coupling) {
    if (!(v > 0.0) || !(v_prime > 0.0)) throw InvalidArgument("variances must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0,1)");
    if (mc_n < 2) throw InvalidArgument("truncation check needs mc_n >= 2");

    const double threshold = 2.0 * std::sqrt(v_prime * std::log(4.0 * std::numbers::sqrt2 / delta));
    const double sd = std::sqrt(v);
    const double sd_prime = std::sqrt(v_prime);
    Engine eng = make_engine(seed, "truncation");
    std::normal_distribution<double> normal(0.0, 1.0);
    RunningMean acc;
    for (std::size_t i = 0; i < mc_n; ++i) {
        const double g = normal(eng);
        const double z = sd * g;
        const double z_prime = coupling == Coupling::Identical ? sd_prime * g : sd_prime * normal(eng);
        acc.add(std::abs(z_prime) > threshold ? z * z : 0.0);
    }
    return ProbeReport::monte_carlo(
        fmt::format("truncated_moment[v={},v'={},delta={},{}]", v, v_prime, delta,
                    coupling == Coupling::Identical ? "identical" : "independent"),
        acc.mean(), v * delta, acc.std_error(), mc_n, seed);
}

ProbeReport risk_curvature_scan(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                                double eta_star, std::size_t n_radii, std::size_t mc_n, std::uint64_t seed) {
    check_probe_model(model, design, noise, mc_n);
    if (!(eta_star > 0.0)) throw InvalidArgument("eta_star must be positive");
    if (n_radii == 0) throw InvalidArgument("curvature scan needs n_radii >= 1");

    const double m_x = design.m_x();
    const double rho_x = rho_x_of(design);
    const CurvatureSpec spec{eta_star, eta_star, model.theta0.norm()};
    const double c = curvature_constant(model.variant, spec, m_x, rho_x, noise);
    const Population pop = draw_population(model, design, noise, mc_n, seed);
    Engine dir_eng = make_engine(seed, "curvature-directions");

    WorstRatio worst;
    const auto d = static_cast<Eigen::Index>(design.d);
    for (std::size_t k = 0; k < n_radii; ++k) {
        const double radius = eta_star * static_cast<double>(k + 1) / static_cast<double>(n_radii);
        const Eigen::VectorXd a = pop.x * (radius * random_unit(d, dir_eng));
        RunningMean acc;
        if (const auto* r = std::get_if<Robust>(&model.variant)) {
            for (Eigen::Index i = 0; i < a.size(); ++i)
                acc.add(detail::tukey_fast(pop.eps[i] - a[i], r->t0) - detail::tukey_fast(pop.eps[i], r->t0));
        } else {
            // R(theta) - R(theta0) = E[(f(X'theta) - f(X'theta0))^2]
            const LinkKind kind = link_of(model.variant);
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                const double diff = detail::link_value_fast(kind, pop.index0[i] + a[i]) -
                                    detail::link_value_fast(kind, pop.index0[i]);
                acc.add(diff * diff);
            }
        }
        const double scale = 2.0 / (radius * radius);
        worst.offer(scale * acc.mean(), scale * acc.std_error(), c);
    }
    return ProbeReport::monte_carlo(fmt::format("risk_curvature[{},eta={}]", model.tag(), eta_star), -worst.ratio,
                                    -c, worst.se, mc_n, seed);
}

}  // namespace nclasso
