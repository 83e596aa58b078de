#include "sve/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sve/errors.hpp"
#include "sve/numeric.hpp"

namespace sve {

namespace {

bool all_finite(const std::vector<double>& xs) {
    for (double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

double boundary_slack(double horizon) {
    return 1e-12 * std::max(1.0, horizon);
}

} // namespace

KernelSpec::KernelSpec(Variant v, double horizon) : variant_(std::move(v)), horizon_(horizon) {
    if (!(horizon_ > 0.0)) throw DomainError("KernelSpec: horizon must be positive");
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, ConstantKernel>) {
                if (!std::isfinite(k.c)) throw DomainError("constant kernel: non-finite value");
            } else if constexpr (std::is_same_v<T, FractionalKernel>) {
                if (!(k.alpha > 0.0 && k.alpha < 1.0))
                    throw DomainError("fractional kernel: alpha must lie in (0,1)");
                if (!std::isfinite(k.scale)) throw DomainError("fractional kernel: bad scale");
            } else if constexpr (std::is_same_v<T, GammaKernel>) {
                if (!(k.alpha > 0.0 && k.alpha < 1.0))
                    throw DomainError("gamma kernel: alpha must lie in (0,1)");
                if (!(k.beta >= 0.0)) throw DomainError("gamma kernel: beta must be >= 0");
            } else if constexpr (std::is_same_v<T, ExpSumKernel>) {
                if (k.terms.empty()) throw DomainError("exp-sum kernel: no terms");
                for (const auto& [c, theta] : k.terms) {
                    if (!(c > 0.0)) throw DomainError("exp-sum kernel: weights must be positive");
                    if (!(theta >= 0.0)) throw DomainError("exp-sum kernel: rates must be >= 0");
                }
            } else if constexpr (std::is_same_v<T, LipschitzConvolutionKernel>) {
                if (k.values.size() < 2)
                    throw DomainError("convolution table: need at least two samples");
                if (!all_finite(k.values)) throw DomainError("convolution table: non-finite entry");
                if (!(k.lipschitz_bound >= 0.0))
                    throw DomainError("convolution table: negative Lipschitz bound");
                const double du = horizon_ / static_cast<double>(k.values.size() - 1);
                for (std::size_t i = 0; i + 1 < k.values.size(); ++i) {
                    if (std::abs(k.values[i + 1] - k.values[i]) >
                        k.lipschitz_bound * du * (1.0 + 1e-9) + 1e-12)
                        throw DomainError("convolution table violates its Lipschitz bound");
                }
            } else if constexpr (std::is_same_v<T, TabulatedKernel>) {
                if (k.s_points < 2 || k.t_points < 2)
                    throw DomainError("tabulated kernel: grid must cover the triangle");
                if (k.values.size() != k.s_points * k.t_points)
                    throw DomainError("tabulated kernel: value count does not match grid");
                if (!all_finite(k.values)) throw DomainError("tabulated kernel: non-finite entry");
            }
        },
        variant_);
}

KernelSpec KernelSpec::constant(double c, double horizon) {
    return KernelSpec(ConstantKernel{c}, horizon);
}
KernelSpec KernelSpec::fractional(double scale, double alpha, double horizon) {
    return KernelSpec(FractionalKernel{scale, alpha}, horizon);
}
KernelSpec KernelSpec::gamma(double alpha, double beta, double horizon) {
    return KernelSpec(GammaKernel{alpha, beta}, horizon);
}
KernelSpec KernelSpec::exp_sum(std::vector<std::pair<double, double>> terms, double horizon) {
    return KernelSpec(ExpSumKernel{std::move(terms)}, horizon);
}
KernelSpec KernelSpec::lipschitz_convolution(std::vector<double> values, double lipschitz_bound,
                                             double horizon) {
    return KernelSpec(LipschitzConvolutionKernel{std::move(values), lipschitz_bound}, horizon);
}
KernelSpec KernelSpec::tabulated(std::size_t s_points, std::size_t t_points,
                                 std::vector<double> values, double horizon) {
    return KernelSpec(TabulatedKernel{s_points, t_points, std::move(values)}, horizon);
}

bool KernelSpec::is_convolution() const {
    return !std::holds_alternative<TabulatedKernel>(variant_);
}

bool KernelSpec::singular_at_diagonal() const {
    if (std::holds_alternative<FractionalKernel>(variant_)) return true;
    if (const auto* g = std::get_if<GammaKernel>(&variant_)) return g->alpha < 1.0;
    return false;
}

std::string KernelSpec::describe() const {
    std::ostringstream os;
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, ConstantKernel>) {
                os << "constant(c=" << k.c << ")";
            } else if constexpr (std::is_same_v<T, FractionalKernel>) {
                os << "fractional(scale=" << k.scale << ",alpha=" << k.alpha << ")";
            } else if constexpr (std::is_same_v<T, GammaKernel>) {
                os << "gamma(alpha=" << k.alpha << ",beta=" << k.beta << ")";
            } else if constexpr (std::is_same_v<T, ExpSumKernel>) {
                os << "exp_sum(" << k.terms.size() << " terms)";
            } else if constexpr (std::is_same_v<T, LipschitzConvolutionKernel>) {
                os << "lipschitz_convolution(" << k.values.size() << " samples)";
            } else {
                os << "tabulated(" << k.s_points << "x" << k.t_points << ")";
            }
        },
        variant_);
    os << " on [0," << horizon_ << "]";
    return os.str();
}

namespace {

double table_lookup(const std::vector<double>& values, double horizon, double u) {
    const std::size_t n = values.size();
    const double du = horizon / static_cast<double>(n - 1);
    double pos = u / du;
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    const std::size_t i0 = std::min(static_cast<std::size_t>(pos), n - 2);
    const double w = pos - static_cast<double>(i0);
    return (1.0 - w) * values[i0] + w * values[i0 + 1];
}

double tabulated_eval(const TabulatedKernel& k, double horizon, double s, double t) {
    const double ds = horizon / static_cast<double>(k.s_points - 1);
    const double dt = horizon / static_cast<double>(k.t_points - 1);
    auto column_value = [&](std::size_t it) {
        double pos = std::clamp(s / ds, 0.0, static_cast<double>(k.s_points - 1));
        const std::size_t i0 = std::min(static_cast<std::size_t>(pos), k.s_points - 2);
        const double w = pos - static_cast<double>(i0);
        return (1.0 - w) * k.values[i0 * k.t_points + it] +
               w * k.values[(i0 + 1) * k.t_points + it];
    };
    double pos = std::clamp(t / dt, 0.0, static_cast<double>(k.t_points - 1));
    const std::size_t it0 = std::min(static_cast<std::size_t>(pos), k.t_points - 2);
    const double w = pos - static_cast<double>(it0);
    // Only interpolate from columns that can see s; close to the diagonal the
    // lower column may not.
    const double t_col0 = static_cast<double>(it0) * dt;
    if (s > t_col0) return column_value(it0 + 1);
    return (1.0 - w) * column_value(it0) + w * column_value(it0 + 1);
}

/// Ktilde(u) for convolution kernels, evaluated directly from the time
/// difference so integrands near the singularity keep full precision.
double convolution_value(const KernelSpec& kernel, double u) {
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, ConstantKernel>) {
                return k.c;
            } else if constexpr (std::is_same_v<T, FractionalKernel>) {
                return k.scale * std::pow(u, -k.alpha);
            } else if constexpr (std::is_same_v<T, GammaKernel>) {
                return std::exp(-k.beta * u) * std::pow(u, k.alpha - 1.0) / std::tgamma(k.alpha);
            } else if constexpr (std::is_same_v<T, ExpSumKernel>) {
                double v = 0.0;
                for (const auto& [c, theta] : k.terms) v += c * std::exp(-theta * u);
                return v;
            } else if constexpr (std::is_same_v<T, LipschitzConvolutionKernel>) {
                return table_lookup(k.values, kernel.horizon(), u);
            } else {
                return std::numeric_limits<double>::quiet_NaN(); // not a convolution
            }
        },
        kernel.variant());
}

/// K(s,t) without the domain checks; s < t assumed.
double raw_eval(const KernelSpec& kernel, double s, double t) {
    if (const auto* tab = std::get_if<TabulatedKernel>(&kernel.variant()))
        return tabulated_eval(*tab, kernel.horizon(), s, t);
    return convolution_value(kernel, t - s);
}

void check_triangle(const KernelSpec& kernel, double s, double t) {
    const double slack = boundary_slack(kernel.horizon());
    if (!(s >= -slack) || !(t <= kernel.horizon() + slack))
        throw DomainError("kernel evaluation outside [0, horizon]");
    if (!(s < t)) throw DomainError("kernel evaluation requires s < t");
}

} // namespace

double eval(const KernelSpec& kernel, double s, double t) {
    check_triangle(kernel, s, t);
    return raw_eval(kernel, std::max(s, 0.0), std::min(t, kernel.horizon()));
}

namespace {

/// Closed-form ∫_a^b |scale|^q (t-s)^{-rho} ds; rho = alpha*q < 1 or b < t.
double fractional_power_integral(double scale_abs_q, double rho, double a, double b, double t) {
    const double u1 = t - a;
    const double u0 = t - b;
    if (rho == 1.0) return scale_abs_q * std::log(u1 / u0);
    return scale_abs_q * (std::pow(u1, 1.0 - rho) - std::pow(u0, 1.0 - rho)) / (1.0 - rho);
}

double exp_segment(double theta, double a, double b, double t) {
    // ∫_a^b exp(-theta (t-s)) ds
    if (theta == 0.0) return b - a;
    return (std::exp(-theta * (t - b)) - std::exp(-theta * (t - a))) / theta;
}

bool touches_diagonal(double b, double t, double horizon) {
    return t - b <= boundary_slack(horizon);
}

void check_abs_power_args(const KernelSpec& kernel, double a, double b, double t, double q) {
    const double slack = boundary_slack(kernel.horizon());
    if (!(q >= 1.0)) throw DomainError("integrate_abs_power: q must be >= 1");
    if (!(a >= -slack && a <= b && b <= t + slack && t <= kernel.horizon() + slack))
        throw DomainError("integrate_abs_power: need 0 <= a <= b <= t <= horizon");
}

double quadrature_abs_power(const KernelSpec& kernel, double a, double b, double t, double q,
                            const QuadratureConfig& cfg) {
    if (kernel.is_convolution()) {
        auto h = [&](double u) { return std::pow(std::abs(convolution_value(kernel, u)), q); };
        const double u_lo = t - b;
        const double u_hi = t - a;
        if (u_lo <= boundary_slack(kernel.horizon()) && kernel.singular_at_diagonal())
            return integrate_singular_lower(h, u_hi, cfg);
        const QuadratureResult r = integrate_adaptive(h, std::max(u_lo, 0.0), u_hi, cfg);
        if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
            throw QuadratureError("integrate_abs_power: quadrature failed to converge");
        return r.value;
    }
    auto h = [&](double s) { return std::pow(std::abs(raw_eval(kernel, s, t)), q); };
    const QuadratureResult r = integrate_adaptive(h, a, b, cfg);
    if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
        throw QuadratureError("integrate_abs_power: quadrature failed to converge");
    return r.value;
}

} // namespace

double integrate_abs_power(const KernelSpec& kernel, double a, double b, double t, double q,
                           const QuadratureConfig& cfg) {
    cfg.validate();
    check_abs_power_args(kernel, a, b, t, q);
    if (a >= b) return 0.0;
    const bool touching = touches_diagonal(b, t, kernel.horizon());

    if (const auto* c = std::get_if<ConstantKernel>(&kernel.variant()))
        return std::pow(std::abs(c->c), q) * (b - a);

    if (const auto* f = std::get_if<FractionalKernel>(&kernel.variant())) {
        const double rho = f->alpha * q;
        if (touching && rho >= 1.0)
            throw DivergenceError("integrate_abs_power: 1 - alpha*q <= 0 with b = t, kernel " +
                                  kernel.describe());
        return fractional_power_integral(std::pow(std::abs(f->scale), q), rho, a,
                                         touching ? t : b, t);
    }

    if (const auto* g = std::get_if<GammaKernel>(&kernel.variant())) {
        if (touching && (1.0 - g->alpha) * q >= 1.0)
            throw DivergenceError("integrate_abs_power: q*(1-alpha) >= 1 with b = t, kernel " +
                                  kernel.describe());
    }

    if (const auto* e = std::get_if<ExpSumKernel>(&kernel.variant())) {
        if (q == 1.0) {
            double v = 0.0;
            for (const auto& [c, theta] : e->terms) v += c * exp_segment(theta, a, b, t);
            return v;
        }
        if (q == 2.0) {
            double v = 0.0;
            for (const auto& [ci, ti] : e->terms)
                for (const auto& [cj, tj] : e->terms) v += ci * cj * exp_segment(ti + tj, a, b, t);
            return v;
        }
    }

    return quadrature_abs_power(kernel, a, b, t, q, cfg);
}

namespace detail {

double integrate_abs_power_quadrature(const KernelSpec& kernel, double a, double b, double t,
                                      double q, const QuadratureConfig& cfg) {
    cfg.validate();
    check_abs_power_args(kernel, a, b, t, q);
    if (a >= b) return 0.0;
    return quadrature_abs_power(kernel, a, b, t, q, cfg);
}

} // namespace detail

double integrate_increment(const KernelSpec& kernel, double t, double t_prime, double q,
                           const QuadratureConfig& cfg) {
    cfg.validate();
    const double slack = boundary_slack(kernel.horizon());
    if (!(q >= 1.0)) throw DomainError("integrate_increment: q must be >= 1");
    if (!(t >= -slack && t <= t_prime && t_prime <= kernel.horizon() + slack))
        throw DomainError("integrate_increment: need 0 <= t <= t' <= horizon");
    if (t_prime - t <= 0.0 || t <= 0.0) return 0.0;
    if (std::holds_alternative<ConstantKernel>(kernel.variant())) return 0.0;

    if (const auto* f = std::get_if<FractionalKernel>(&kernel.variant())) {
        if (f->alpha * q >= 1.0)
            throw DivergenceError("integrate_increment: 1 - alpha*q <= 0, kernel " +
                                  kernel.describe());
    }
    if (const auto* g = std::get_if<GammaKernel>(&kernel.variant())) {
        if ((1.0 - g->alpha) * q >= 1.0)
            throw DivergenceError("integrate_increment: q*(1-alpha) >= 1, kernel " +
                                  kernel.describe());
    }

    const double delta = t_prime - t;

    if (kernel.is_convolution()) {
        auto h = [&](double u) {
            const double v1 = convolution_value(kernel, u + delta);
            const double v0 = convolution_value(kernel, u);
            return std::pow(std::abs(v1 - v0), q);
        };
        const double split = std::min(t, 4.0 * delta);
        double total = 0.0;
        if (kernel.singular_at_diagonal()) {
            total += integrate_singular_lower(h, split, cfg);
        } else {
            const QuadratureResult r = integrate_adaptive(h, 0.0, split, cfg);
            if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
                throw QuadratureError("integrate_increment: quadrature failed near diagonal");
            total += r.value;
        }
        if (split < t) {
            const QuadratureResult r = integrate_adaptive(h, split, t, cfg);
            if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
                throw QuadratureError("integrate_increment: quadrature failed to converge");
            total += r.value;
        }
        return total;
    }

    auto h = [&](double s) {
        return std::pow(std::abs(raw_eval(kernel, s, t_prime) - raw_eval(kernel, s, t)), q);
    };
    const double split = std::max(0.0, t - 4.0 * delta);
    double total = 0.0;
    for (const auto& [lo, hi] : {std::pair{0.0, split}, std::pair{split, t}}) {
        if (hi <= lo) continue;
        const QuadratureResult r = integrate_adaptive(h, lo, hi, cfg);
        if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
            throw QuadratureError("integrate_increment: quadrature failed to converge");
        total += r.value;
    }
    return total;
}

double integrate_signed(const KernelSpec& kernel, double a, double b, double t,
                        const QuadratureConfig& cfg) {
    cfg.validate();
    check_abs_power_args(kernel, a, b, t, 1.0);
    if (a >= b) return 0.0;
    const bool touching = touches_diagonal(b, t, kernel.horizon());

    if (const auto* c = std::get_if<ConstantKernel>(&kernel.variant())) return c->c * (b - a);
    if (const auto* f = std::get_if<FractionalKernel>(&kernel.variant()))
        return f->scale * fractional_power_integral(1.0, f->alpha, a, touching ? t : b, t);
    if (const auto* e = std::get_if<ExpSumKernel>(&kernel.variant())) {
        double v = 0.0;
        for (const auto& [c, theta] : e->terms) v += c * exp_segment(theta, a, b, t);
        return v;
    }

    if (kernel.is_convolution()) {
        auto h = [&](double u) { return convolution_value(kernel, u); };
        const double u_lo = t - b;
        const double u_hi = t - a;
        if (u_lo <= boundary_slack(kernel.horizon()) && kernel.singular_at_diagonal())
            return integrate_singular_lower(h, u_hi, cfg);
        const QuadratureResult r = integrate_adaptive(h, std::max(u_lo, 0.0), u_hi, cfg);
        if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
            throw QuadratureError("integrate_signed: quadrature failed to converge");
        return r.value;
    }
    auto h = [&](double s) { return raw_eval(kernel, s, t); };
    const QuadratureResult r = integrate_adaptive(h, a, b, cfg);
    if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
        throw QuadratureError("integrate_signed: quadrature failed to converge");
    return r.value;
}

double integrate_product(const KernelSpec& kernel, double a, double b, double t1, double t2,
                         const QuadratureConfig& cfg) {
    cfg.validate();
    const double slack = boundary_slack(kernel.horizon());
    if (!(a >= -slack && a <= b && b <= t1 + slack && t1 <= t2 &&
          t2 <= kernel.horizon() + slack))
        throw DomainError("integrate_product: need 0 <= a <= b <= t1 <= t2 <= horizon");
    if (a >= b) return 0.0;

    if (const auto* c = std::get_if<ConstantKernel>(&kernel.variant()))
        return c->c * c->c * (b - a);
    if (const auto* e = std::get_if<ExpSumKernel>(&kernel.variant())) {
        double v = 0.0;
        for (const auto& [ci, ti] : e->terms)
            for (const auto& [cj, tj] : e->terms)
                v += ci * cj * std::exp(-tj * (t2 - t1)) * exp_segment(ti + tj, a, b, t1);
        return v;
    }

    const bool touching = touches_diagonal(b, t1, kernel.horizon());
    if (touching && kernel.singular_at_diagonal()) {
        if (const auto* f = std::get_if<FractionalKernel>(&kernel.variant())) {
            if (t2 - t1 <= slack && 2.0 * f->alpha >= 1.0)
                throw DivergenceError("integrate_product: kernel is not square-integrable "
                                      "up to the diagonal: " + kernel.describe());
        }
        if (const auto* g = std::get_if<GammaKernel>(&kernel.variant())) {
            if (t2 - t1 <= slack && 2.0 * (1.0 - g->alpha) >= 1.0)
                throw DivergenceError("integrate_product: kernel is not square-integrable "
                                      "up to the diagonal: " + kernel.describe());
        }
        auto h = [&](double w) {
            return convolution_value(kernel, w) * convolution_value(kernel, t2 - t1 + w);
        };
        return integrate_singular_lower(h, t1 - a, cfg);
    }

    auto h = [&](double s) { return raw_eval(kernel, s, t1) * raw_eval(kernel, s, t2); };
    const QuadratureResult r = integrate_adaptive(h, a, b, cfg);
    if (!r.converged && r.error_estimate > 1e-4 * std::max(1.0, std::abs(r.value)))
        throw QuadratureError("integrate_product: quadrature failed to converge");
    return r.value;
}

// --- certification ---

std::vector<std::pair<double, double>> default_pair_grid(double horizon) {
    std::vector<std::pair<double, double>> pairs;
    const double anchors[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int k = 0; k <= 20; ++k) {
        const double gap = horizon * std::pow(0.5, k);
        double prev_t = -1.0;
        for (double frac : anchors) {
            const double t = frac * (horizon - gap);
            if (t == prev_t) continue;
            prev_t = t;
            pairs.emplace_back(t, t + gap);
        }
    }
    return pairs;
}

namespace {

void validate_certify_inputs(const std::vector<double>& epsilon_grid,
                             const std::vector<double>& gamma_grid,
                             const std::vector<std::pair<double, double>>& pair_grid,
                             double horizon, double eta) {
    if (epsilon_grid.empty() || gamma_grid.empty())
        throw DomainError("certify: epsilon and gamma grids must be non-empty");
    for (double e : epsilon_grid)
        if (!(e > 0.0)) throw DomainError("certify: epsilon values must be positive");
    for (double g : gamma_grid)
        if (!(g > 0.0 && g <= 0.5)) throw DomainError("certify: gamma values must lie in (0, 1/2]");
    if (!(eta >= 1.0)) throw DomainError("certify: eta must be >= 1");
    if (pair_grid.size() < 50) throw DomainError("certify: need at least 50 (t,t') pairs");
    double min_gap = std::numeric_limits<double>::infinity();
    double max_gap = 0.0;
    for (const auto& [t, tp] : pair_grid) {
        if (!(t >= 0.0 && t < tp && tp <= horizon * (1.0 + 1e-12)))
            throw DomainError("certify: pair grid must lie in the triangle with t < t'");
        min_gap = std::min(min_gap, tp - t);
        max_gap = std::max(max_gap, tp - t);
    }
    if (min_gap > horizon * std::pow(2.0, -14) * (1.0 + 1e-9) || max_gap < horizon * 0.5)
        throw DomainError("certify: pair gaps must span [horizon*2^-14, horizon]");
}

} // namespace

KernelCertificate certify_one(const KernelSpec& kernel, KernelRole role, double eta,
                              const std::vector<double>& epsilon_grid,
                              const std::vector<double>& gamma_grid,
                              const std::vector<std::pair<double, double>>& pair_grid,
                              const QuadratureConfig& cfg, const CertifyOptions& opts) {
    validate_certify_inputs(epsilon_grid, gamma_grid, pair_grid, kernel.horizon(), eta);
    const double q = role == KernelRole::drift ? 1.0 : 2.0;

    KernelCertificate cert;
    cert.role = role;
    cert.eta = eta;
    cert.grid = pair_grid;
    cert.blowup_threshold = opts.blowup_threshold;
    cert.kernel_description = kernel.describe();

    std::vector<double> gammas = gamma_grid;
    std::sort(gammas.begin(), gammas.end(), std::greater<>());
    std::vector<double> epsilons = epsilon_grid;
    std::sort(epsilons.begin(), epsilons.end());

    // The increment sums depend on epsilon only; cache them across gamma.
    struct SumCache {
        bool computed = false;
        bool divergent = false;
        std::string reason;
        std::vector<double> sums;
    };
    std::vector<SumCache> cache(epsilons.size());

    const std::size_t n = pair_grid.size();
    std::vector<std::size_t> by_gap(n);
    for (std::size_t i = 0; i < n; ++i) by_gap[i] = i;
    std::stable_sort(by_gap.begin(), by_gap.end(), [&](std::size_t a, std::size_t b) {
        return pair_grid[a].second - pair_grid[a].first <
               pair_grid[b].second - pair_grid[b].first;
    });
    const std::size_t decile = std::max<std::size_t>(1, n / 10);

    std::string last_reason = "no candidate passed";

    for (double gamma : gammas) {
        for (std::size_t ei = 0; ei < epsilons.size(); ++ei) {
            const double eps = epsilons[ei];
            SumCache& sc = cache[ei];
            if (!sc.computed) {
                sc.computed = true;
                sc.sums.assign(n, 0.0);
                std::vector<std::string> errors(n);
                parallel_for(n, opts.threads, [&](std::size_t lo, std::size_t hi) {
                    for (std::size_t i = lo; i < hi; ++i) {
                        const auto& [t, tp] = pair_grid[i];
                        try {
                            sc.sums[i] = integrate_increment(kernel, t, tp, q + eps, cfg) +
                                         integrate_abs_power(kernel, t, tp, tp, q + eps, cfg);
                        } catch (const DivergenceError& e) {
                            errors[i] = e.what();
                        }
                    }
                });
                for (const auto& msg : errors) {
                    if (!msg.empty()) {
                        sc.divergent = true;
                        sc.reason = msg;
                        break;
                    }
                }
            }
            if (sc.divergent) {
                last_reason = "divergent integral at epsilon=" + std::to_string(eps) + ": " +
                              sc.reason;
                continue;
            }

            const double exponent = gamma * (q + eps);
            std::vector<double> ratios(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double gap = pair_grid[i].second - pair_grid[i].first;
                ratios[i] = sc.sums[i] / std::pow(gap, exponent);
            }
            std::vector<double> decile_ratios(decile);
            for (std::size_t i = 0; i < decile; ++i) decile_ratios[i] = ratios[by_gap[i]];
            const double med_small = median(decile_ratios);
            const double med_all = median(ratios);
            if (med_small > opts.blowup_threshold * med_all) {
                last_reason = "unbounded ratio trend at gamma=" + std::to_string(gamma) +
                              ", epsilon=" + std::to_string(eps);
                continue;
            }

            double L = 0.0;
            for (double r : ratios) L = std::max(L, r);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                const double gap = pair_grid[i].second - pair_grid[i].first;
                worst = std::max(worst, sc.sums[i] - L * std::pow(gap, exponent));
            }

            cert.verdict = CertVerdict::certified;
            cert.gamma = gamma;
            cert.epsilon = eps;
            cert.L = L;
            cert.p_min = std::max((2.0 * eta + 1.0) / gamma, (4.0 + 2.0 * eps) / eps);
            cert.worst_residual = worst;
            return cert;
        }
    }

    cert.verdict = CertVerdict::rejected;
    cert.rejection_reason = last_reason;
    return cert;
}

std::pair<KernelCertificate, KernelCertificate>
certify(const KernelSpec& kernel_b, const KernelSpec& kernel_sigma, double eta,
        const std::vector<double>& epsilon_grid, const std::vector<double>& gamma_grid,
        const std::vector<std::pair<double, double>>& pair_grid, const QuadratureConfig& cfg,
        const CertifyOptions& opts) {
    return {certify_one(kernel_b, KernelRole::drift, eta, epsilon_grid, gamma_grid, pair_grid,
                        cfg, opts),
            certify_one(kernel_sigma, KernelRole::diffusion, eta, epsilon_grid, gamma_grid,
                        pair_grid, cfg, opts)};
}

} // namespace sve
