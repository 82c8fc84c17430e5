#pragma once

// Unchecked pointwise loss/derivative kernels for inner loops. Callers
// validate inputs once up front.

#include <cmath>
#include <utility>
#include <variant>

#include "nclasso/model_zoo.hpp"

namespace nclasso::detail {

inline double logistic_value(double t) {
    const double e = std::exp(-std::abs(t));
    return t >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

inline LinkValue link_fast(LinkKind kind, double t) {
    if (kind == LinkKind::Logistic) {
        const double e = std::exp(-std::abs(t));
        const double value = t >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        return {value, e / ((1.0 + e) * (1.0 + e))};
    }
    const double a = std::exp(-2.0 * std::abs(t));
    return {std::tanh(t), 4.0 * a / ((1.0 + a) * (1.0 + a))};
}

inline double link_value_fast(LinkKind kind, double t) {
    return kind == LinkKind::Logistic ? logistic_value(t) : std::tanh(t);
}

inline double tukey_fast(double r, double t0) {
    const double u = r / t0;
    if (std::abs(u) > 1.0) return 1.0;
    const double w = 1.0 - u * u;
    return 1.0 - w * w * w;
}

inline double tukey_deriv_fast(double r, double t0) {
    const double u = r / t0;
    if (std::abs(u) >= 1.0) return 0.0;
    const double w = 1.0 - u * u;
    return 6.0 * r / (t0 * t0) * w * w;
}

/// Calls fn(value_kernel, deriv_kernel) with kernels specialised for the model.
template <class Fn>
decltype(auto) with_kernels(const LossVariant& variant, Fn&& fn) {
    if (const auto* r = std::get_if<Robust>(&variant)) {
        const double t0 = r->t0;
        return fn([t0](double t, double y) { return tukey_fast(y - t, t0); },
                  [t0](double t, double y) { return -tukey_deriv_fast(y - t, t0); });
    }
    const LinkKind kind = std::holds_alternative<Binary>(variant) ? std::get<Binary>(variant).link
                                                                  : std::get<Nls>(variant).link;
    return fn(
        [kind](double t, double y) {
            const double r = y - link_value_fast(kind, t);
            return r * r;
        },
        [kind](double t, double y) {
            const auto [v, dv] = link_fast(kind, t);
            return -2.0 * (y - v) * dv;
        });
}

}  // namespace nclasso::detail
