#pragma once

#include <cstddef>
#include <functional>

namespace sve {

struct QuadratureConfig {
    double abs_tol = 1e-11;
    double rel_tol = 1e-9;
    int max_subdivisions = 4000;
    bool singularity_substitution = true;

    void validate() const;
};

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = false;
    int subdivisions = 0;
};

using Integrand = std::function<double(double)>;

/// Single 15-point Gauss-Kronrod panel with embedded error estimate.
QuadratureResult gk15_panel(const Integrand& f, double a, double b);

/// Adaptive bisection on [a, b] for integrands smooth in the interior.
QuadratureResult integrate_adaptive(const Integrand& f, double a, double b,
                                    const QuadratureConfig& cfg);

/// ∫_0^length h(u) du where h may have an integrable singularity at u = 0.
/// h takes the distance from the singularity, so no precision is lost near
/// it. Applies the power substitution u = v^4 (when enabled) so algebraic
/// singularities weaken, then refines adaptively. Throws DivergenceError when
/// the dyadic tail toward 0 fails to decay, and QuadratureError when
/// refinement stalls for other reasons.
double integrate_singular_lower(const Integrand& h, double length,
                                const QuadratureConfig& cfg);

/// Dyadic probe of ∫_0^length near u = 0: returns true when the per-octave
/// contributions do not decay (non-integrable behavior).
bool dyadic_tail_diverges(const Integrand& h, double length);

} // namespace sve
