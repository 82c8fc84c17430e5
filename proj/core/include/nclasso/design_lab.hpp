#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "nclasso/model_zoo.hpp"
#include "nclasso/rng.hpp"

namespace nclasso {

// ---------------------------------------------------------------------------
// Design laws. All entries are bounded by m_x, centred and symmetric, so the
// rows are m_x^2-sub-Gaussian and the minimum eigenvalue of E[XX'] is known in
// closed form (or from a small analytic Toeplitz matrix for the mixed variant).
// ---------------------------------------------------------------------------

struct Rademacher {
    double scale = 1.0;
};

struct UniformBox {
    double half_width = 1.0;
};

using DesignFamily = std::variant<Rademacher, UniformBox>;

/// `n_mix > 1` turns on the correlated variant: every coordinate is the
/// average of `n_mix` consecutive i.i.d. base draws, scaled so |X_j| <= m_x.
struct DesignSpec {
    std::size_t d = 1;
    DesignFamily family = Rademacher{};
    std::size_t n_mix = 1;

    double m_x() const noexcept;
    void validate() const;
};

/// Covariance E[XX'] of one design row.
Eigen::MatrixXd design_covariance(const DesignSpec& spec);

/// Lower bound rho_X on the smallest eigenvalue of E[XX'].
double rho_x_of(const DesignSpec& spec);

Eigen::MatrixXd gen_design(const DesignSpec& spec, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Noise laws: all symmetric about 0 with a density that is positive and
// decreasing on the positive half line.
// ---------------------------------------------------------------------------

struct Gaussian {
    double sd = 1.0;
};

struct Laplace {
    double scale = 1.0;
};

struct StudentT {
    double dof = 3.0;
    double scale = 1.0;
};

struct ContaminatedGaussian {
    double sd1 = 1.0;
    double sd2 = 5.0;
    double mix = 0.1;  ///< probability of drawing from the sd2 component
};

using NoiseFamily = std::variant<Gaussian, Laplace, StudentT, ContaminatedGaussian>;

struct NoiseSpec {
    NoiseFamily family = Gaussian{};

    void validate() const;
    std::string_view tag() const noexcept;
};

double noise_density(const NoiseSpec& noise, double e);
double sample_noise(const NoiseSpec& noise, Engine& eng);

/// Synthetic sample from one model. `x` is n x d.
struct Dataset {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    ModelSpec model;
    DesignSpec design;
    NoiseSpec noise;
    std::uint64_t seed = 0;

    std::size_t n() const noexcept { return static_cast<std::size_t>(x.rows()); }
    std::size_t d() const noexcept { return static_cast<std::size_t>(x.cols()); }
};

/// s0 entries equal to +-magnitude on a support drawn uniformly without replacement.
Eigen::VectorXd gen_theta0(std::size_t d, std::size_t s0, double magnitude, std::uint64_t seed);

/// Responses for the rows of `x` under `model`. Binary ignores `noise`; Nls
/// requires Gaussian noise and draws it with the model's noise_sd.
Eigen::VectorXd gen_response(const ModelSpec& model, const Eigen::MatrixXd& x, const NoiseSpec& noise,
                             std::uint64_t seed);

/// Design and response drawn from independent sub-streams of `seed`.
Dataset make_dataset(const ModelSpec& model, const DesignSpec& design, const NoiseSpec& noise, std::size_t n,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Text export: "# nclasso-dataset v1; n=<n> d=<d> model=<tag> seed=<seed>"
// followed by n rows "y,x_1,...,x_d" with 17 significant digits.
// ---------------------------------------------------------------------------

struct DatasetFile {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::string model_tag;
    std::uint64_t seed = 0;
};

void write_dataset(const std::string& path, const Dataset& data);
void write_dataset(std::ostream& out, const Dataset& data);
DatasetFile read_dataset(const std::string& path);
DatasetFile read_dataset(std::istream& in, const std::string& source_name = "<stream>");

}  // namespace nclasso
