#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nclasso/design_lab.hpp"
#include "nclasso/model_zoo.hpp"
#include "nclasso/solver.hpp"

namespace nclasso {

/// Outcome of one numerical check. Every check is phrased as
/// `measured <= bound`; lower-bound statements are reported with both sides
/// negated. For Monte Carlo checks the comparison allows 5 standard errors.
struct ProbeReport {
    std::string check_name;
    bool passed = false;
    double measured = 0.0;
    double bound = 0.0;
    double margin = 0.0;  ///< bound - measured
    double mc_std_error = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;

    static ProbeReport monte_carlo(std::string name, double measured, double bound, double std_error,
                                   std::size_t n_samples, std::uint64_t seed);
    static ProbeReport deterministic(std::string name, double measured, double bound, std::uint64_t seed = 0);
};

/// One JSON object per line, numbers with 17 significant digits.
std::string to_json_line(const ProbeReport& report);
void write_probe_reports(std::ostream& out, const std::vector<ProbeReport>& reports);
void write_probe_reports(const std::string& path, const std::vector<ProbeReport>& reports);
std::vector<ProbeReport> read_probe_reports(const std::string& path);

struct CurvatureSpec {
    double gamma = 1.0;
    double eta_star = 1.0;
    double m_0 = 1.0;
};

// ---------------------------------------------------------------------------
// Identification function g(t) = E[rho'(t + eps)] of the robust model.
// ---------------------------------------------------------------------------

struct Quadrature {
    double abs_tol = 1e-10;
};
struct MonteCarlo {
    std::size_t n = 100000;
    std::uint64_t seed = 0;
};
using GMethod = std::variant<Quadrature, MonteCarlo>;

struct GEstimate {
    double value = 0.0;
    double std_error = 0.0;  ///< zero for quadrature
    bool used_quadrature = true;
    bool fell_back = false;  ///< quadrature was requested but could not meet its tolerance
};

GEstimate estimate_g(const NoiseSpec& noise, double t0, double t, const GMethod& method = Quadrature{});

/// Central difference of quadrature values with step 1e-4 t0.
double estimate_g_prime_zero(const NoiseSpec& noise, double t0);

/// inf over 0 < t <= s of g(t)/t. The grid is a fixed log lattice with
/// (grid-1)/3 points per decade starting at 1e-6 t0, plus s itself, so the
/// result is nonincreasing in s.
double estimate_big_l(const NoiseSpec& noise, double t0, double s, std::size_t grid = 200);

/// Robust: 2 sqrt(m_x^2 gamma^2 log(8 sqrt2 m_x^2 / rho_x)).
double robust_s_gamma(double gamma, double m_x, double rho_x);
/// Binary/Nls: 2 m_x max(gamma, m_0) sqrt(log(16 sqrt2 m_x^2 / rho_x)).
double link_s_gamma0(double gamma, double m_0, double m_x, double rho_x);

/// Lower bound c(gamma) on grad R(theta)'(theta - theta0) / |theta - theta0|_2^2
/// over the l2 ball of radius gamma around theta0.
///   Robust:      L(s_gamma) rho_x / 2
///   Binary/Nls:  inf_{|t| <= 2 s_gamma0} link'(t)^2 rho_x
double curvature_constant(const LossVariant& variant, const CurvatureSpec& spec, double m_x, double rho_x,
                          const NoiseSpec& noise);

/// Samples theta = theta0 + delta u (u uniform on the sphere, delta <= gamma)
/// and checks grad R(theta)'(theta - theta0) >= c(gamma) |theta - theta0|^2.
ProbeReport gradient_identification_check(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                                          std::size_t n_dirs, double gamma, std::size_t mc_n, std::uint64_t seed);

/// Sampled maximum over B of |D(theta) - D(theta0)| / (|theta - theta0|_1 v delta_n)
/// with D = R-hat - R, compared with r_n. A lower bound on the supremum only.
ProbeReport increment_ratio_probe(const ModelSpec& model, const Dataset& data, const PenaltySchedule& schedule,
                                  std::size_t n_probe, std::size_t oracle_mc_n, std::uint64_t seed);

enum class MaxAverageVariant {
    Bounded,              ///< Z_i with i.i.d. +-m coordinates
    GaussianTimesBounded  ///< Z_i = eps_i X_i, eps ~ N(0,1), X Rademacher(m)
};

/// Monte Carlo mean of |n^-1 sum Z_i|_inf against m sqrt(2 log(2d)/n).
ProbeReport lemma_max_average_check(double m, std::size_t n, std::size_t d, std::size_t reps, std::uint64_t seed,
                                    MaxAverageVariant variant = MaxAverageVariant::Bounded);

enum class Coupling {
    Independent,
    Identical  ///< Z' = sqrt(v'/v) Z
};

/// E[Z^2 1{|Z'| > 2 sqrt(v' log(4 sqrt2 / delta))}] <= v delta for centred Gaussians.
ProbeReport lemma_subgaussian_truncation_check(double v, double v_prime, double delta, std::size_t mc_n,
                                               std::uint64_t seed, Coupling coupling = Coupling::Independent);

/// min over rays of 2 (R(theta) - R(theta0)) / |theta - theta0|^2 at radii up
/// to eta_star, compared with c(eta_star).
ProbeReport risk_curvature_scan(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise,
                                double eta_star, std::size_t n_radii, std::size_t mc_n, std::uint64_t seed);

}  // namespace nclasso
