#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sve/quadrature.hpp"

namespace sve {

// Volterra kernels K(s,t) on the triangle 0 <= s <= t <= horizon.

struct ConstantKernel {
    double c = 1.0;
};

/// scale * (t-s)^{-alpha}, alpha in (0,1).
struct FractionalKernel {
    double scale = 1.0;
    double alpha = 0.5;
};

/// exp(-beta (t-s)) (t-s)^{alpha-1} / Gamma(alpha), alpha in (0,1), beta >= 0.
struct GammaKernel {
    double alpha = 0.75;
    double beta = 1.0;
};

/// sum_i c_i exp(-theta_i (t-s)), c_i > 0, theta_i >= 0.
struct ExpSumKernel {
    std::vector<std::pair<double, double>> terms; // (c_i, theta_i)
};

/// Convolution kernel K(s,t) = Ktilde(t-s) from a uniformly sampled table on
/// [0, horizon], linearly interpolated, with a declared Lipschitz bound.
struct LipschitzConvolutionKernel {
    std::vector<double> values;
    double lipschitz_bound = 0.0;
};

/// General kernel tabulated on a uniform (s, t) grid over the triangle,
/// interpolated linearly in s within the bracketing t-columns, then in t.
struct TabulatedKernel {
    std::size_t s_points = 0;
    std::size_t t_points = 0;
    std::vector<double> values; // s-major: values[is * t_points + it]
};

class KernelSpec {
public:
    using Variant = std::variant<ConstantKernel, FractionalKernel, GammaKernel,
                                 ExpSumKernel, LipschitzConvolutionKernel, TabulatedKernel>;

    KernelSpec(Variant v, double horizon);

    static KernelSpec constant(double c, double horizon = 1.0);
    static KernelSpec fractional(double scale, double alpha, double horizon = 1.0);
    static KernelSpec gamma(double alpha, double beta, double horizon = 1.0);
    static KernelSpec exp_sum(std::vector<std::pair<double, double>> terms,
                              double horizon = 1.0);
    static KernelSpec lipschitz_convolution(std::vector<double> values,
                                            double lipschitz_bound, double horizon = 1.0);
    static KernelSpec tabulated(std::size_t s_points, std::size_t t_points,
                                std::vector<double> values, double horizon = 1.0);

    const Variant& variant() const { return variant_; }
    double horizon() const { return horizon_; }

    bool is_convolution() const;
    bool singular_at_diagonal() const;
    std::string describe() const;

private:
    Variant variant_;
    double horizon_;
};

/// K(s,t); requires 0 <= s < t <= horizon (strict: singular variants diverge
/// on the diagonal). Throws DomainError otherwise.
double eval(const KernelSpec& kernel, double s, double t);

/// ∫_a^b |K(s,t)|^q ds for 0 <= a <= b <= t <= horizon, q >= 1. Closed forms
/// for constant / fractional / exp-sum (q = 1, 2); adaptive quadrature with
/// the u = t-s substitution otherwise. Throws DivergenceError when the
/// integrand is non-integrable on [a, b].
double integrate_abs_power(const KernelSpec& kernel, double a, double b, double t,
                           double q, const QuadratureConfig& cfg);

/// ∫_0^t |K(s,t') - K(s,t)|^q ds for 0 <= t <= t' <= horizon, q >= 1.
double integrate_increment(const KernelSpec& kernel, double t, double t_prime, double q,
                           const QuadratureConfig& cfg);

/// Signed ∫_a^b K(s,t) ds (no absolute value); used by the solver weights.
double integrate_signed(const KernelSpec& kernel, double a, double b, double t,
                        const QuadratureConfig& cfg);

/// ∫_a^b K(s,t1) K(s,t2) ds for t1 <= t2, b <= t1; singular-aware when the
/// interval touches s = t1. Used for the per-interval noise covariance.
double integrate_product(const KernelSpec& kernel, double a, double b, double t1, double t2,
                         const QuadratureConfig& cfg);

namespace detail {
/// Forces the generic quadrature path, bypassing closed forms (cross-checks).
double integrate_abs_power_quadrature(const KernelSpec& kernel, double a, double b, double t,
                                      double q, const QuadratureConfig& cfg);
} // namespace detail

// --- certification against the kernel regularity conditions ---

enum class KernelRole { drift, diffusion };

enum class CertVerdict { certified, rejected };

struct KernelCertificate {
    KernelRole role = KernelRole::drift;
    CertVerdict verdict = CertVerdict::rejected;
    double gamma = 0.0;
    double epsilon = 0.0;
    double L = 0.0;
    double eta = 1.0;
    double p_min = 0.0;
    std::vector<std::pair<double, double>> grid; // (t, t') pairs checked
    double worst_residual = 0.0;
    double blowup_threshold = 10.0;
    std::string rejection_reason;
    std::string kernel_description;

    bool certified() const { return verdict == CertVerdict::certified; }
};

/// (t, t') pairs with dyadic gaps 2^-k * horizon, k = 0..20, several anchor
/// positions per gap. Satisfies the certify() preconditions.
std::vector<std::pair<double, double>> default_pair_grid(double horizon);

/// Certifies a drift/diffusion kernel pair: scans gamma (largest first) and
/// epsilon (smallest first) candidates, fits L as the max over the pair grid
/// of (increment sum) / gap^{gamma (q+eps)}, and accepts the first candidate
/// whose ratios show no blow-up trend as the gap shrinks (smallest-gap decile
/// median vs overall median, factor threshold below). A rejected certificate
/// is a report, not an error.
struct CertifyOptions {
    double blowup_threshold = 10.0;
    unsigned threads = 1;
};

std::pair<KernelCertificate, KernelCertificate>
certify(const KernelSpec& kernel_b, const KernelSpec& kernel_sigma, double eta,
        const std::vector<double>& epsilon_grid, const std::vector<double>& gamma_grid,
        const std::vector<std::pair<double, double>>& pair_grid, const QuadratureConfig& cfg,
        const CertifyOptions& opts = {});

KernelCertificate certify_one(const KernelSpec& kernel, KernelRole role, double eta,
                              const std::vector<double>& epsilon_grid,
                              const std::vector<double>& gamma_grid,
                              const std::vector<std::pair<double, double>>& pair_grid,
                              const QuadratureConfig& cfg, const CertifyOptions& opts = {});

} // namespace sve
