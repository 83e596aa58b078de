#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sve/measure.hpp"

namespace sve {

/// Drift/diffusion pair with law dependence. Evaluation must be deterministic
/// and safe to call concurrently with shared read-only state; |.| on the
/// diffusion matrix is the Frobenius norm throughout.
class CoefficientModel {
public:
    using DriftFn = std::function<void(double t, std::span<const double> x,
                                       const EmpiricalMeasure& mu, std::span<double> out)>;
    using DiffusionFn = std::function<void(double t, std::span<const double> x,
                                           const EmpiricalMeasure& mu, std::span<double> out)>;

    CoefficientModel(std::string label, std::size_t dim_state, std::size_t dim_noise,
                     double eta, double growth_constant, DriftFn drift, DiffusionFn diffusion);

    const std::string& label() const { return label_; }
    std::size_t dim_state() const { return dim_state_; }
    std::size_t dim_noise() const { return dim_noise_; }
    double eta() const { return eta_; }
    double growth_constant() const { return growth_constant_; }

    /// b(t, x, mu) -> out (d); throws NonFiniteOutput echoing (t, x).
    void drift(double t, std::span<const double> x, const EmpiricalMeasure& mu,
               std::span<double> out) const;
    /// sigma(t, x, mu) -> out (d x m, row-major); throws NonFiniteOutput.
    void diffusion(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                   std::span<double> out) const;

private:
    std::string label_;
    std::size_t dim_state_;
    std::size_t dim_noise_;
    double eta_;
    double growth_constant_;
    DriftFn drift_;
    DiffusionFn diffusion_;
};

// --- benchmark catalog; every entry satisfies the declared growth bound ---

/// b = 0, sigma = sigma0 * I.
CoefficientModel pure_noise(double sigma0, std::size_t dim = 1, double eta = 2.0);

/// b = -theta (x - mean(mu)), sigma = sigma0 * I.
CoefficientModel mean_field_ou(double theta, double sigma0, std::size_t dim = 1,
                               double eta = 2.0);

/// b = beta (x - mean(mu)), sigma = (a + b_vol * min(|x|, trunc)) * I.
CoefficientModel scalar_interaction(double beta, double a, double b_vol, double trunc = 10.0,
                                    std::size_t dim = 1, double eta = 2.0);

CoefficientModel custom_model(std::string label, std::size_t dim_state, std::size_t dim_noise,
                              double eta, double growth_constant,
                              CoefficientModel::DriftFn drift,
                              CoefficientModel::DiffusionFn diffusion);

// --- empirical verification of the growth / continuity conditions ---

struct GrowthReport {
    double max_ratio = 0.0;
    double declared_constant = 0.0;
    bool pass = false;
    double worst_t = 0.0;
    double worst_x_norm = 0.0;
    double worst_measure_moment = 0.0;
};

/// Samples (t, x, mu) with |x| <= radius and atoms within radius (plus the
/// deterministic corner probes x = +-radius e_k, mu = delta_0) and reports the
/// max of (|b| + |sigma|) / (1 + |x| + W_eta(delta_0, mu)) against the
/// declared constant.
GrowthReport growth_check(const CoefficientModel& model, std::size_t sample_count,
                          double radius, std::uint64_t seed, double horizon = 1.0);

struct ModulusReport {
    std::vector<double> delta;
    std::vector<double> omega;     // estimated modulus of continuity per delta
    double loglog_slope = 0.0;     // 0 when fewer than 2 positive omegas
    bool all_zero = false;
    bool monotone_to_zero = false; // heuristic verdict
};

/// Estimates omega(delta) = sup |b(t,x,mu)-b(t,y,nu)| + |sigma(..)-sigma(..)|
/// over sampled pairs at distance <= delta on the compact |x| <= radius.
/// Probes only jittered empirical measures, so the verdict is heuristic.
ModulusReport modulus_check(const CoefficientModel& model, double compact_radius,
                            const std::vector<double>& delta_grid, std::uint64_t seed,
                            std::size_t samples_per_delta = 128, double horizon = 1.0);

} // namespace sve
