#include "sve/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sve/errors.hpp"
#include "sve/numeric.hpp"
#include "sve/rng.hpp"

namespace sve {

CoefficientModel::CoefficientModel(std::string label, std::size_t dim_state,
                                   std::size_t dim_noise, double eta, double growth_constant,
                                   DriftFn drift, DiffusionFn diffusion)
    : label_(std::move(label)), dim_state_(dim_state), dim_noise_(dim_noise), eta_(eta),
      growth_constant_(growth_constant), drift_(std::move(drift)),
      diffusion_(std::move(diffusion)) {
    if (dim_state_ == 0 || dim_noise_ == 0)
        throw DomainError("CoefficientModel: dimensions must be positive");
    if (!(eta_ >= 1.0)) throw DomainError("CoefficientModel: eta must be >= 1");
    if (!(growth_constant_ > 0.0))
        throw DomainError("CoefficientModel: declared growth constant must be positive");
}

namespace {

void check_finite(std::span<const double> out, double t, std::span<const double> x,
                  const char* what) {
    for (double v : out) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << what << " produced a non-finite value at t=" << t << ", x=(";
            for (std::size_t k = 0; k < x.size(); ++k) os << (k ? "," : "") << x[k];
            os << ")";
            throw NonFiniteOutput(os.str());
        }
    }
}

} // namespace

void CoefficientModel::drift(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                             std::span<double> out) const {
    drift_(t, x, mu, out);
    check_finite(out, t, x, "drift");
}

void CoefficientModel::diffusion(double t, std::span<const double> x,
                                 const EmpiricalMeasure& mu, std::span<double> out) const {
    diffusion_(t, x, mu, out);
    check_finite(out, t, x, "diffusion");
}

namespace {

void identity_times(std::size_t d, std::size_t m, double value, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < std::min(d, m); ++k) out[k * m + k] = value;
}

} // namespace

CoefficientModel pure_noise(double sigma0, std::size_t dim, double eta) {
    const double frob = std::abs(sigma0) * std::sqrt(static_cast<double>(dim));
    return CoefficientModel(
        "pure_noise", dim, dim, eta, std::max(frob, 1e-300),
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        },
        [sigma0, dim](double, std::span<const double>, const EmpiricalMeasure&,
                      std::span<double> out) { identity_times(dim, dim, sigma0, out); });
}

CoefficientModel mean_field_ou(double theta, double sigma0, std::size_t dim, double eta) {
    const double frob = std::abs(sigma0) * std::sqrt(static_cast<double>(dim));
    const double growth = std::max(std::abs(theta), frob) + (frob > 0.0 ? 0.0 : 1e-300);
    return CoefficientModel(
        "mean_field_ou", dim, dim, eta, growth,
        [theta](double, std::span<const double> x, const EmpiricalMeasure& mu,
                std::span<double> out) {
            const auto m = mu.mean();
            for (std::size_t k = 0; k < x.size(); ++k) out[k] = -theta * (x[k] - m[k]);
        },
        [sigma0, dim](double, std::span<const double>, const EmpiricalMeasure&,
                      std::span<double> out) { identity_times(dim, dim, sigma0, out); });
}

CoefficientModel scalar_interaction(double beta, double a, double b_vol, double trunc,
                                    std::size_t dim, double eta) {
    const double growth =
        std::abs(beta) + (std::abs(a) + std::abs(b_vol)) * std::sqrt(static_cast<double>(dim)) +
        1e-300;
    return CoefficientModel(
        "scalar_interaction", dim, dim, eta, growth,
        [beta](double, std::span<const double> x, const EmpiricalMeasure& mu,
               std::span<double> out) {
            const auto m = mu.mean();
            for (std::size_t k = 0; k < x.size(); ++k) out[k] = beta * (x[k] - m[k]);
        },
        [a, b_vol, trunc, dim](double, std::span<const double> x, const EmpiricalMeasure&,
                               std::span<double> out) {
            const double vol = a + b_vol * std::min(norm2(x), trunc);
            identity_times(dim, dim, vol, out);
        });
}

CoefficientModel custom_model(std::string label, std::size_t dim_state, std::size_t dim_noise,
                              double eta, double growth_constant,
                              CoefficientModel::DriftFn drift,
                              CoefficientModel::DiffusionFn diffusion) {
    return CoefficientModel(std::move(label), dim_state, dim_noise, eta, growth_constant,
                            std::move(drift), std::move(diffusion));
}

namespace {

std::vector<double> random_point(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag,
                                 std::uint64_t index, std::size_t d, double radius) {
    // Component-wise uniform in a box inscribed in the radius ball.
    const double half = radius / std::sqrt(static_cast<double>(d));
    std::vector<double> x(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double u = rng::uniform_open(seed, stream, rng::position(tag, index, k), 0);
        x[k] = (2.0 * u - 1.0) * half;
    }
    return x;
}

EmpiricalMeasure random_measure(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                                std::size_t d, std::size_t atoms, double radius) {
    std::vector<double> flat;
    flat.reserve(atoms * d);
    for (std::size_t i = 0; i < atoms; ++i) {
        const auto x = random_point(seed, stream, rng::kTagScratch, index * 64 + i, d, radius);
        flat.insert(flat.end(), x.begin(), x.end());
    }
    return EmpiricalMeasure(std::move(flat), d);
}

double coefficient_magnitude(const CoefficientModel& model, double t,
                             std::span<const double> x, const EmpiricalMeasure& mu,
                             std::vector<double>& bwork, std::vector<double>& swork) {
    model.drift(t, x, mu, bwork);
    model.diffusion(t, x, mu, swork);
    return norm2(bwork) + norm2(swork);
}

} // namespace

GrowthReport growth_check(const CoefficientModel& model, std::size_t sample_count,
                          double radius, std::uint64_t seed, double horizon) {
    if (sample_count < 1) throw DomainError("growth_check: sample_count must be >= 1");
    const std::size_t d = model.dim_state();
    GrowthReport report;
    report.declared_constant = model.growth_constant();

    std::vector<double> bwork(d), swork(d * model.dim_noise());
    auto consider = [&](double t, std::span<const double> x, const EmpiricalMeasure& mu) {
        const double denom = 1.0 + norm2(x) + mu.moment(model.eta());
        const double ratio = coefficient_magnitude(model, t, x, mu, bwork, swork) / denom;
        if (ratio > report.max_ratio) {
            report.max_ratio = ratio;
            report.worst_t = t;
            report.worst_x_norm = norm2(x);
            report.worst_measure_moment = mu.moment(model.eta());
        }
    };

    // Corner probes: the growth bound is usually tight at the boundary.
    const EmpiricalMeasure delta0 = EmpiricalMeasure::dirac(std::vector<double>(d, 0.0));
    for (std::size_t k = 0; k < d; ++k) {
        for (double sign : {-1.0, 1.0}) {
            std::vector<double> x(d, 0.0);
            x[k] = sign * radius;
            consider(0.0, x, delta0);
            consider(horizon, x, delta0);
        }
    }

    for (std::size_t i = 0; i < sample_count; ++i) {
        const double t =
            horizon * rng::uniform_open(seed, 0, rng::position(rng::kTagScratch, 1, i), 0);
        const auto x = random_point(seed, 1, rng::kTagScratch, i, d, radius);
        const auto mu = random_measure(seed, 2, i, d, 16, radius);
        consider(t, x, mu);
    }

    report.pass = report.max_ratio <= report.declared_constant * (1.0 + 1e-9);
    return report;
}

ModulusReport modulus_check(const CoefficientModel& model, double compact_radius,
                            const std::vector<double>& delta_grid, std::uint64_t seed,
                            std::size_t samples_per_delta, double horizon) {
    if (!(compact_radius > 0.0)) throw DomainError("modulus_check: radius must be positive");
    if (delta_grid.empty()) throw DomainError("modulus_check: empty delta grid");

    const std::size_t d = model.dim_state();
    const std::size_t m = model.dim_noise();
    ModulusReport report;
    report.delta = delta_grid;
    std::sort(report.delta.begin(), report.delta.end());
    report.omega.assign(report.delta.size(), 0.0);

    std::vector<double> b1(d), b2(d), s1(d * m), s2(d * m);
    auto pair_distance = [&](double t, std::span<const double> x, const EmpiricalMeasure& mu,
                             std::span<const double> y, const EmpiricalMeasure& nu) {
        model.drift(t, x, mu, b1);
        model.drift(t, y, nu, b2);
        model.diffusion(t, x, mu, s1);
        model.diffusion(t, y, nu, s2);
        double db = 0.0, ds = 0.0;
        for (std::size_t k = 0; k < d; ++k) db += (b1[k] - b2[k]) * (b1[k] - b2[k]);
        for (std::size_t k = 0; k < d * m; ++k) ds += (s1[k] - s2[k]) * (s1[k] - s2[k]);
        return std::sqrt(db) + std::sqrt(ds);
    };

    for (std::size_t di = 0; di < report.delta.size(); ++di) {
        const double delta = report.delta[di];
        double omega = 0.0;

        // Deterministic probes along the axes, including the origin where
        // Hoelder-type moduli peak.
        const EmpiricalMeasure delta0 = EmpiricalMeasure::dirac(std::vector<double>(d, 0.0));
        for (std::size_t k = 0; k < d; ++k) {
            for (double base : {0.0, 0.5 * compact_radius, compact_radius - delta}) {
                if (base < 0.0) continue;
                std::vector<double> x(d, 0.0), y(d, 0.0);
                x[k] = base;
                y[k] = base + delta;
                if (std::abs(y[k]) > compact_radius) continue;
                omega = std::max(omega, pair_distance(0.0, x, delta0, y, delta0));
            }
        }

        for (std::size_t i = 0; i < samples_per_delta; ++i) {
            const std::uint64_t idx = di * samples_per_delta + i;
            const double t = horizon *
                rng::uniform_open(seed, 3, rng::position(rng::kTagScratch, 2, idx), 0);
            auto x = random_point(seed, 4, rng::kTagScratch, idx, d, compact_radius);
            std::vector<double> y(d);
            double shift = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double u =
                    rng::uniform_open(seed, 5, rng::position(rng::kTagScratch, idx, k), 0);
                y[k] = 2.0 * u - 1.0;
                shift += y[k] * y[k];
            }
            shift = std::sqrt(shift);
            for (std::size_t k = 0; k < d; ++k)
                y[k] = x[k] + (shift > 0.0 ? delta * y[k] / shift : 0.0);

            auto mu = random_measure(seed, 6, idx, d, 8, compact_radius);
            std::vector<double> jittered(mu.flat().begin(), mu.flat().end());
            for (std::size_t k = 0; k < jittered.size(); ++k) {
                const double u =
                    rng::uniform_open(seed, 7, rng::position(rng::kTagScratch, idx, k), 0);
                jittered[k] += delta * (2.0 * u - 1.0) / std::sqrt(static_cast<double>(d));
            }
            const EmpiricalMeasure nu(std::move(jittered), d);
            omega = std::max(omega, pair_distance(t, x, mu, y, nu));
        }
        report.omega[di] = omega;
    }

    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < report.delta.size(); ++i) {
        if (report.omega[i] > 0.0) {
            lx.push_back(std::log(report.delta[i]));
            ly.push_back(std::log(report.omega[i]));
        }
    }
    report.all_zero = ly.empty();
    if (lx.size() >= 2) report.loglog_slope = linear_fit(lx, ly).slope;
    report.monotone_to_zero =
        report.all_zero || (report.loglog_slope > 0.05 &&
                            report.omega.front() <= report.omega.back() * (1.0 + 1e-9));
    return report;
}

} // namespace sve
