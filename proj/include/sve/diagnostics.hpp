#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sve/solver.hpp"

namespace sve {

/// Compactly supported C^2 test function f(z) = cutoff((z - z0)/r) * P(z),
/// with a quintic-spline radial cutoff (1 inside |y| <= 1, 0 outside |y| >= 2)
/// and P linear or quadratic around the center.
class TestFunction {
public:
    enum class Shape { bump_linear, bump_quadratic };

    TestFunction(std::string id, Shape shape, std::vector<double> center, double scale,
                 double constant, std::vector<double> linear,
                 std::vector<double> quadratic /* d x d row-major; empty for linear */);

    const std::string& id() const { return id_; }
    Shape shape() const { return shape_; }
    std::size_t dim() const { return center_.size(); }
    double support_radius() const { return 2.0 * scale_; }

    double value(std::span<const double> z) const;
    void gradient(std::span<const double> z, std::span<double> out) const;
    void hessian(std::span<const double> z, std::span<double> out /* d x d */) const;

private:
    std::string id_;
    Shape shape_;
    std::vector<double> center_;
    double scale_;
    double c0_;
    std::vector<double> lin_;
    std::vector<double> quad_;
};

/// Deterministic default family (>= `count`, mixing both shapes) sized to an
/// ensemble whose accumulator paths live within ~`spread` of `center`.
std::vector<TestFunction> default_test_functions(std::size_t dim, std::size_t count,
                                                 std::span<const double> center, double spread);

// --- moment report ---

struct MomentTable {
    std::vector<double> times;
    std::vector<double> q_list;
    std::vector<double> estimate; // row-major: [time][q]
    std::vector<double> std_error;
    double at(std::size_t ti, std::size_t qi) const { return estimate[ti * q_list.size() + qi]; }
    double se(std::size_t ti, std::size_t qi) const { return std_error[ti * q_list.size() + qi]; }
    double sup_over_time(std::size_t qi) const;
    double se_at_sup(std::size_t qi) const;
};

/// E|X_t|^q with jackknife standard errors, per grid time and q.
MomentTable moment_report(const ParticleEnsemble& ensemble, const std::vector<double>& q_list);

/// Boundedness check across two mesh levels: sup-over-grid moments must agree
/// within z_threshold combined standard errors for every q.
struct MomentComparison {
    std::vector<double> q_list;
    std::vector<double> difference;
    std::vector<double> combined_se;
    double z_threshold = 3.0;
    bool pass = false;
};

MomentComparison compare_moment_tables(const MomentTable& a, const MomentTable& b,
                                       double z_threshold = 3.0);

// --- increment scaling (tightness exponent) ---

struct IncrementFit {
    double p = 2.0;
    std::vector<double> lag_times;
    std::vector<double> mean_abs_power; // averaged over anchors and particles
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    bool degenerate = false; // all increments identically zero
};

/// Regresses log E|X_{t+h} - X_t|^p on log h over grid-aligned lags (indices),
/// averaging over up to 32 equally spaced anchors. Lags must span >= 1.5
/// decades (InsufficientLags otherwise); requires a uniform grid.
IncrementFit increment_scaling(const ParticleEnsemble& ensemble, double p,
                               const std::vector<std::size_t>& lag_indices);

/// Same statistic on the accumulator paths (reported as observations).
IncrementFit increment_scaling_on(const std::vector<double>& paths, const Partition& partition,
                                  std::size_t particles, std::size_t dim, double p,
                                  const std::vector<std::size_t>& lag_indices);

// --- pathwise Hoelder exponent ---

struct HolderEstimate {
    double exponent = 0.0;
    std::string method = "dyadic-max-ratio-median";
    std::vector<double> scales;
    std::size_t degenerate_paths = 0;
};

/// Median over particles of per-path log-log slopes of max increments across
/// dyadic scales; requires M >= 64.
HolderEstimate holder_estimate(const ParticleEnsemble& ensemble);

// --- martingale defect (local martingale problem, tested literally) ---

struct MartingaleStat {
    std::string function_id;
    std::size_t s_index = 0;
    std::size_t t_index = 0;
    std::string weight; // "1", "z0", ..., "f(Z_s)"
    double statistic = 0.0;
    double std_error = 0.0;
    double z = 0.0;
};

struct MartingaleReport {
    std::vector<MartingaleStat> stats;
    double max_abs_z = 0.0;
    double z_threshold = 3.0;
    bool pass = false;
};

std::vector<std::pair<std::size_t, std::size_t>> default_time_pairs(std::size_t steps);

/// For each test function f and grid-aligned pair (s, t): computes the
/// defect D_n = f(Z_n(t)) - f(Z_n(s)) - sum_{s <= t_i < t} dt_i A^f(t_i, ...)
/// and z-scores of E[D g(Z_s)] against adapted weights g in {1, components of
/// Z_s, f(Z_s)}. drift_scale / diffusion_scale deliberately mis-specify the
/// generator for power checks.
MartingaleReport martingale_defect(const ParticleEnsemble& ensemble,
                                   const CoefficientModel& model,
                                   const std::vector<TestFunction>& functions,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                   double z_threshold = 3.0, unsigned threads = 1,
                                   double drift_scale = 1.0, double diffusion_scale = 1.0);

// --- refinement studies (common-seed ladders) ---

struct LadderDistance {
    std::string from;
    std::string to;
    double distance = 0.0;
    bool approximate = false;
};

struct RefinementReport {
    std::vector<LadderDistance> mesh_distances;
    std::vector<LadderDistance> particle_distances;
    bool mesh_decreasing = false;
    bool particle_decreasing = false;
    bool pass = false;
};

struct RefinementStudyConfig {
    std::vector<std::size_t> mesh_steps;      // >= 3 dyadically nested levels
    std::vector<std::size_t> particle_counts; // >= 2 levels
    std::size_t mesh_particles = 4000;
    std::size_t particle_mesh_steps = 100;
    double eta = 2.0;
    unsigned threads = 1;
    QuadratureConfig quadrature{};
};

/// Simulates the model across a mesh ladder with nested Brownian increments
/// (each coarse increment is the exact sum of its children) and a particle
/// ladder with shared streams, and reports terminal-law Wasserstein distances
/// between consecutive levels.
RefinementReport refinement_study(const CoefficientModel& model, const KernelSpec& kernel_b,
                                  const KernelSpec& kernel_sigma, double horizon,
                                  const InitialCondition& initial, std::uint64_t seed,
                                  SimMode mode, const RefinementStudyConfig& cfg);

/// Brownian increment table at `steps` intervals (particle-major N x M x m),
/// then aggregated to any coarser dyadic level; used for ladder coupling.
std::vector<double> nested_increments(std::uint64_t seed, std::size_t particles,
                                      std::size_t fine_steps, std::size_t coarse_steps,
                                      std::size_t dim_noise, double horizon);

// --- frozen-coefficient Volterra integral convergence ---

using FrozenMap = std::function<double(double t, std::span<const double> x,
                                       const EmpiricalMeasure& mu)>;

struct FrozenIntegralReport {
    std::vector<std::string> level;
    std::vector<double> sup_difference; // sup_t mean_n |I_k - I_finest|
    bool decreasing = false;
};

/// Evaluates I_k(t) = sum_i w_k(i,t) f(t_i, X^k(t_i), mu^k_i) on the finest
/// grid's times for every ladder level and reports sup-norm differences to the
/// finest level. Ensembles must share particle count and nest their grids.
FrozenIntegralReport frozen_integral_convergence(
    const std::vector<const ParticleEnsemble*>& ladder, const KernelSpec& kernel,
    const FrozenMap& f, const QuadratureConfig& cfg, unsigned threads = 1);

} // namespace sve
