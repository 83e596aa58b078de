#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sve/kernel.hpp"
#include "sve/measure.hpp"
#include "sve/model.hpp"

namespace sve {

/// Time grid 0 = t_0 < t_1 < ... < t_M = horizon.
class Partition {
public:
    explicit Partition(std::vector<double> times);
    static Partition uniform(double horizon, std::size_t steps);

    const std::vector<double>& times() const { return times_; }
    std::size_t steps() const { return times_.size() - 1; } // M
    double horizon() const { return times_.back(); }
    double mesh() const { return mesh_; }
    double dt(std::size_t i) const { return times_[i + 1] - times_[i]; }

    /// Left grid-point projection: t_i for t in [t_i, t_{i+1}), horizon at the
    /// right endpoint. Throws DomainError outside [0, horizon].
    double kappa(double t) const;
    std::size_t kappa_index(double t) const;

    bool operator==(const Partition& other) const { return times_ == other.times_; }

private:
    std::vector<double> times_;
    double mesh_;
};

/// Sub-interval kernel integrals of the scheme, stored lower-triangular:
///   w_b(i,j)     = ∫_{t_i}^{t_{i+1}} K_b(s, t_j) ds
///   v_sigma(i,j) = ∫_{t_i}^{t_{i+1}} K_sigma(s, t_j) ds
///   q_sigma(i,j) = ∫_{t_i}^{t_{i+1}} K_sigma(s, t_j)^2 ds
/// for 0 <= i < j <= M.
class KernelWeights {
public:
    KernelWeights(std::size_t steps);

    std::size_t steps() const { return steps_; }
    double w_b(std::size_t i, std::size_t j) const { return wb_[index(i, j)]; }
    double v_sigma(std::size_t i, std::size_t j) const { return vs_[index(i, j)]; }
    double q_sigma(std::size_t i, std::size_t j) const { return qs_[index(i, j)]; }

    double& w_b_at(std::size_t i, std::size_t j) { return wb_[index(i, j)]; }
    double& v_sigma_at(std::size_t i, std::size_t j) { return vs_[index(i, j)]; }
    double& q_sigma_at(std::size_t i, std::size_t j) { return qs_[index(i, j)]; }

    /// Contiguous row for fixed i: entries j = i+1 .. M.
    const double* w_b_row(std::size_t i) const { return wb_.data() + offsets_[i]; }
    const double* v_sigma_row(std::size_t i) const { return vs_.data() + offsets_[i]; }

private:
    std::size_t index(std::size_t i, std::size_t j) const {
        return offsets_[i] + (j - i - 1);
    }
    std::size_t steps_;
    std::vector<std::size_t> offsets_;
    std::vector<double> wb_, vs_, qs_;
};

KernelWeights precompute_weights(const KernelSpec& kernel_b, const KernelSpec& kernel_sigma,
                                 const Partition& partition, const QuadratureConfig& cfg,
                                 unsigned threads = 1);

enum class SimMode { integrated_kernel, left_point, variance_matched };

std::string to_string(SimMode mode);
SimMode sim_mode_from_string(const std::string& name);

/// Per-interval factorization of the joint Gaussian (dW_i, ∫ K dB toward each
/// later grid time). Row 0 of each factor is the Brownian increment itself,
/// row a >= 1 the integral toward t_{i+a}; G = F F^T with the exact marginal
/// variances (Delta_i, q_sigma(i, i+a)) on the diagonal.
struct VarianceMatchedFactors {
    std::vector<std::vector<double>> factor; // [interval i]: (M-i+1) x rank, row-major
    std::vector<std::size_t> rank;
};

VarianceMatchedFactors build_variance_matched_factors(const KernelSpec& kernel_sigma,
                                                      const Partition& partition,
                                                      const KernelWeights& weights,
                                                      const QuadratureConfig& cfg,
                                                      unsigned threads = 1);

/// Initial distribution mu_0; draws are keyed by (seed, particle stream), so
/// the same particle sees the same initial point on every grid.
class InitialCondition {
public:
    enum class Kind { point, gaussian, empirical };

    static InitialCondition point_mass(std::vector<double> value);
    static InitialCondition gaussian(std::vector<double> mean, std::vector<double> cov_rowmajor);
    static InitialCondition empirical(std::vector<double> atoms_flat, std::size_t dim);

    Kind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    void draw(std::uint64_t seed, std::uint64_t stream, std::vector<double>& out) const;

    const std::vector<double>& point() const { return point_; }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& cov() const { return cov_; }
    const std::vector<double>& atoms() const { return atoms_; }

private:
    InitialCondition() = default;
    Kind kind_ = Kind::point;
    std::size_t dim_ = 0;
    std::vector<double> point_, mean_, cov_, chol_, atoms_;
};

/// N particle paths of the Euler-type scheme on a grid, with the drift and
/// martingale accumulator paths (Z = A + Mart) and the Brownian increments.
/// All arrays are particle-major: value(n, j, k) = data[(n*(M+1) + j)*d + k].
struct ParticleEnsemble {
    Partition partition{std::vector<double>{0.0, 1.0}};
    std::size_t particles = 0;
    std::size_t dim_state = 0;
    std::size_t dim_noise = 0;
    std::uint64_t seed = 0;
    SimMode mode = SimMode::integrated_kernel;
    std::vector<std::uint64_t> stream_labels; // empty: identity labeling
    std::string model_label;
    std::string kernel_b_description;
    std::string kernel_sigma_description;

    std::vector<double> state;      // X: N x (M+1) x d
    std::vector<double> drift_path; // A: N x (M+1) x d, A(n,0) = X(n,0)
    std::vector<double> mart_path;  // M: N x (M+1) x d, M(n,0) = 0
    std::vector<double> increments; // dW: N x M x m

    double x(std::size_t n, std::size_t j, std::size_t k = 0) const {
        return state[(n * (partition.steps() + 1) + j) * dim_state + k];
    }
    double a(std::size_t n, std::size_t j, std::size_t k = 0) const {
        return drift_path[(n * (partition.steps() + 1) + j) * dim_state + k];
    }
    double mart(std::size_t n, std::size_t j, std::size_t k = 0) const {
        return mart_path[(n * (partition.steps() + 1) + j) * dim_state + k];
    }
    double dw(std::size_t n, std::size_t i, std::size_t c = 0) const {
        return increments[(n * partition.steps() + i) * dim_noise + c];
    }
    std::uint64_t stream_of(std::size_t n) const {
        return stream_labels.empty() ? n : stream_labels[n];
    }
    bool has_accumulators() const {
        return !drift_path.empty() && !mart_path.empty();
    }

    /// Empirical measure of {X(n, j)}_n.
    EmpiricalMeasure marginal(std::size_t j) const;
    EmpiricalMeasure terminal_measure() const { return marginal(partition.steps()); }
};

struct SimulateOptions {
    unsigned threads = 1;
    QuadratureConfig quadrature{};
    /// Reuse precomputed tables across runs on the same grid.
    const KernelWeights* weights = nullptr;
    const VarianceMatchedFactors* factors = nullptr;
    /// Prescribed Brownian increments (N x M x m, particle-major); used by the
    /// refinement ladders so coarse increments are sums of their children.
    const std::vector<double>* increments = nullptr;
    /// Optional RNG stream relabeling (size N).
    std::vector<std::uint64_t> stream_labels;
};

ParticleEnsemble simulate(const CoefficientModel& model, const KernelSpec& kernel_b,
                          const KernelSpec& kernel_sigma, const Partition& partition,
                          std::size_t particles, std::uint64_t seed, SimMode mode,
                          const InitialCondition& initial, const SimulateOptions& opts = {});

/// Recomputes every X(n,j) from Z_0, the accumulator increments, and the
/// kernel weights, and reports the worst relative residual. The scheme is
/// definitionally this sum, so anything above 1e-10 flags corruption.
struct ReconstructionReport {
    double max_rel_residual = 0.0;
    std::size_t worst_particle = 0;
    std::size_t worst_step = 0;
    bool pass = false;
};

ReconstructionReport reconstruct(const ParticleEnsemble& ensemble, const KernelWeights& weights,
                                 const KernelSpec& kernel_sigma,
                                 const CoefficientModel* model = nullptr,
                                 const QuadratureConfig* cfg = nullptr, unsigned threads = 1);

} // namespace sve
