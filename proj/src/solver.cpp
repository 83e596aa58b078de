#include "sve/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sve/errors.hpp"
#include "sve/numeric.hpp"
#include "sve/rng.hpp"

namespace sve {

Partition::Partition(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw DomainError("Partition: need at least one step");
    if (times_.front() != 0.0) throw DomainError("Partition: grid must start at 0");
    mesh_ = 0.0;
    for (std::size_t i = 0; i + 1 < times_.size(); ++i) {
        const double d = times_[i + 1] - times_[i];
        if (!(d > 0.0)) throw DomainError("Partition: grid times must be strictly increasing");
        mesh_ = std::max(mesh_, d);
    }
    if (!(times_.back() > 0.0)) throw DomainError("Partition: horizon must be positive");
}

Partition Partition::uniform(double horizon, std::size_t steps) {
    if (steps < 1) throw DomainError("Partition: need at least one step");
    if (!(horizon > 0.0)) throw DomainError("Partition: horizon must be positive");
    std::vector<double> times(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        times[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    times.front() = 0.0;
    times.back() = horizon;
    return Partition(std::move(times));
}

std::size_t Partition::kappa_index(double t) const {
    if (!(t >= 0.0 && t <= horizon())) throw DomainError("kappa: time outside [0, horizon]");
    if (t == horizon()) return steps();
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return static_cast<std::size_t>(it - times_.begin()) - 1;
}

double Partition::kappa(double t) const { return times_[kappa_index(t)]; }

KernelWeights::KernelWeights(std::size_t steps) : steps_(steps) {
    offsets_.resize(steps_);
    std::size_t off = 0;
    for (std::size_t i = 0; i < steps_; ++i) {
        offsets_[i] = off;
        off += steps_ - i;
    }
    wb_.assign(off, 0.0);
    vs_.assign(off, 0.0);
    qs_.assign(off, 0.0);
}

KernelWeights precompute_weights(const KernelSpec& kernel_b, const KernelSpec& kernel_sigma,
                                 const Partition& partition, const QuadratureConfig& cfg,
                                 unsigned threads) {
    const std::size_t M = partition.steps();
    const auto& t = partition.times();
    const double slack = 1e-9 * std::max(1.0, partition.horizon());
    if (kernel_b.horizon() < partition.horizon() - slack ||
        kernel_sigma.horizon() < partition.horizon() - slack)
        throw DomainError("precompute_weights: kernel horizon shorter than the grid");

    KernelWeights w(M);
    parallel_for(M, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = i + 1; j <= M; ++j) {
                w.w_b_at(i, j) = integrate_signed(kernel_b, t[i], t[i + 1], t[j], cfg);
                w.v_sigma_at(i, j) = integrate_signed(kernel_sigma, t[i], t[i + 1], t[j], cfg);
                const double q =
                    integrate_abs_power(kernel_sigma, t[i], t[i + 1], t[j], 2.0, cfg);
                w.q_sigma_at(i, j) = std::max(q, 0.0);
            }
        }
    });

    // Cauchy-Schwarz consistency of the tables; violations beyond quadrature
    // noise indicate a broken kernel implementation.
    for (std::size_t i = 0; i < M; ++i) {
        const double dt = partition.dt(i);
        for (std::size_t j = i + 1; j <= M; ++j) {
            const double v = w.v_sigma(i, j);
            const double q = w.q_sigma(i, j);
            if (!(std::isfinite(v) && std::isfinite(q)))
                throw DivergenceError("precompute_weights: non-finite weight");
            if (q * dt < v * v * (1.0 - 1e-6) - 1e-12)
                throw Error("precompute_weights: weight tables violate Cauchy-Schwarz");
        }
    }
    return w;
}

std::string to_string(SimMode mode) {
    switch (mode) {
        case SimMode::integrated_kernel: return "integrated_kernel";
        case SimMode::left_point: return "left_point";
        case SimMode::variance_matched: return "variance_matched";
    }
    return "unknown";
}

SimMode sim_mode_from_string(const std::string& name) {
    if (name == "integrated_kernel") return SimMode::integrated_kernel;
    if (name == "left_point") return SimMode::left_point;
    if (name == "variance_matched") return SimMode::variance_matched;
    throw ConfigError("unknown simulation mode: " + name);
}

VarianceMatchedFactors build_variance_matched_factors(const KernelSpec& kernel_sigma,
                                                      const Partition& partition,
                                                      const KernelWeights& weights,
                                                      const QuadratureConfig& cfg,
                                                      unsigned threads) {
    const std::size_t M = partition.steps();
    const auto& t = partition.times();
    VarianceMatchedFactors out;
    out.factor.resize(M);
    out.rank.resize(M);

    parallel_for(M, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t nf = M - i;     // future grid times
            const std::size_t n = nf + 1;     // plus the Brownian increment row
            std::vector<double> G(n * n, 0.0);
            G[0] = partition.dt(i);
            for (std::size_t a = 1; a <= nf; ++a) {
                G[a] = G[a * n] = weights.v_sigma(i, i + a);
                G[a * n + a] = weights.q_sigma(i, i + a);
            }
            for (std::size_t a = 1; a <= nf; ++a)
                for (std::size_t b = a + 1; b <= nf; ++b) {
                    const double c =
                        integrate_product(kernel_sigma, t[i], t[i + 1], t[i + a], t[i + b], cfg);
                    G[a * n + b] = G[b * n + a] = c;
                }
            PivotedCholesky pc = pivoted_cholesky(std::move(G), n, 1e-12);
            out.factor[i] = std::move(pc.factor);
            out.rank[i] = pc.rank;
        }
    });
    return out;
}

InitialCondition InitialCondition::point_mass(std::vector<double> value) {
    InitialCondition ic;
    ic.kind_ = Kind::point;
    ic.dim_ = value.size();
    ic.point_ = std::move(value);
    if (ic.dim_ == 0) throw DomainError("InitialCondition: empty point");
    return ic;
}

InitialCondition InitialCondition::gaussian(std::vector<double> mean,
                                            std::vector<double> cov_rowmajor) {
    InitialCondition ic;
    ic.kind_ = Kind::gaussian;
    ic.dim_ = mean.size();
    if (ic.dim_ == 0) throw DomainError("InitialCondition: empty mean");
    if (cov_rowmajor.size() != ic.dim_ * ic.dim_)
        throw DomainError("InitialCondition: covariance shape mismatch");
    ic.mean_ = std::move(mean);
    ic.cov_ = std::move(cov_rowmajor);
    // Dense Cholesky; d is small. Semi-definite diagonals fall back to 0.
    const std::size_t d = ic.dim_;
    ic.chol_.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = ic.cov_[i * d + j];
            for (std::size_t k = 0; k < j; ++k) s -= ic.chol_[i * d + k] * ic.chol_[j * d + k];
            if (i == j) {
                if (s < -1e-12) throw DomainError("InitialCondition: covariance not PSD");
                ic.chol_[i * d + i] = std::sqrt(std::max(s, 0.0));
            } else {
                ic.chol_[i * d + j] =
                    ic.chol_[j * d + j] > 0.0 ? s / ic.chol_[j * d + j] : 0.0;
            }
        }
    }
    return ic;
}

InitialCondition InitialCondition::empirical(std::vector<double> atoms_flat, std::size_t dim) {
    InitialCondition ic;
    ic.kind_ = Kind::empirical;
    ic.dim_ = dim;
    if (dim == 0 || atoms_flat.empty() || atoms_flat.size() % dim != 0)
        throw DomainError("InitialCondition: bad empirical atom table");
    ic.atoms_ = std::move(atoms_flat);
    return ic;
}

void InitialCondition::draw(std::uint64_t seed, std::uint64_t stream,
                            std::vector<double>& out) const {
    out.resize(dim_);
    switch (kind_) {
        case Kind::point:
            std::copy(point_.begin(), point_.end(), out.begin());
            return;
        case Kind::gaussian: {
            std::vector<double> z(dim_);
            for (std::size_t k = 0; k < dim_; ++k)
                z[k] = rng::normal_at(seed, stream, rng::kTagInitial, 0, k);
            for (std::size_t i = 0; i < dim_; ++i) {
                double v = mean_[i];
                for (std::size_t k = 0; k <= i; ++k) v += chol_[i * dim_ + k] * z[k];
                out[i] = v;
            }
            return;
        }
        case Kind::empirical: {
            const std::size_t count = atoms_.size() / dim_;
            const double u =
                rng::uniform_open(seed, stream, rng::position(rng::kTagInitial, 1, 0), 0);
            const std::size_t idx =
                std::min(count - 1, static_cast<std::size_t>(u * static_cast<double>(count)));
            std::copy(atoms_.begin() + static_cast<std::ptrdiff_t>(idx * dim_),
                      atoms_.begin() + static_cast<std::ptrdiff_t>((idx + 1) * dim_),
                      out.begin());
            return;
        }
    }
}

EmpiricalMeasure ParticleEnsemble::marginal(std::size_t j) const {
    const std::size_t stride = partition.steps() + 1;
    std::vector<double> atoms(particles * dim_state);
    for (std::size_t n = 0; n < particles; ++n)
        for (std::size_t k = 0; k < dim_state; ++k)
            atoms[n * dim_state + k] = state[(n * stride + j) * dim_state + k];
    return EmpiricalMeasure(std::move(atoms), dim_state);
}

namespace {

void scatter_step(ParticleEnsemble& ens, const CoefficientModel& model,
                  const KernelWeights& weights, const VarianceMatchedFactors* factors,
                  const std::vector<double>& sigma_row_factors, const EmpiricalMeasure& mu,
                  std::size_t i, const std::vector<double>* prescribed, std::size_t n0,
                  std::size_t n1) {
    const std::size_t M = ens.partition.steps();
    const std::size_t d = ens.dim_state;
    const std::size_t m = ens.dim_noise;
    const std::size_t stride = M + 1;
    const double t_i = ens.partition.times()[i];
    const double dt = ens.partition.dt(i);
    const double sqrt_dt = std::sqrt(dt);

    std::vector<double> b(d), sig(d * m), noise(d);
    std::vector<double> g, h;

    for (std::size_t n = n0; n < n1; ++n) {
        double* X = ens.state.data() + n * stride * d;
        double* A = ens.drift_path.data() + n * stride * d;
        double* Mt = ens.mart_path.data() + n * stride * d;
        double* dW = ens.increments.data() + (n * M + i) * m;

        const std::span<const double> x_now(X + i * d, d);
        model.drift(t_i, x_now, mu, b);
        model.diffusion(t_i, x_now, mu, sig);

        const std::uint64_t stream = ens.stream_of(n);

        if (ens.mode == SimMode::variance_matched) {
            const auto& F = factors->factor[i];
            const std::size_t rank = factors->rank[i];
            const std::size_t rows = M - i + 1;
            g.assign(rank * m, 0.0);
            for (std::size_t k = 0; k < rank; ++k)
                for (std::size_t c = 0; c < m; ++c)
                    g[k * m + c] = rng::normal_at(ens.seed, stream, rng::kTagFactorNoise, i,
                                                  k * m + c);
            h.assign(rows * m, 0.0);
            for (std::size_t a = 0; a < rows; ++a) {
                const double* Fr = F.data() + a * rank;
                for (std::size_t c = 0; c < m; ++c) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < rank; ++k) s += Fr[k] * g[k * m + c];
                    h[a * m + c] = s;
                }
            }
            for (std::size_t c = 0; c < m; ++c) dW[c] = h[c];

            const double* wb = weights.w_b_row(i);
            for (std::size_t j = i + 1; j <= M; ++j) {
                const double wbij = wb[j - i - 1];
                const double* xi = h.data() + (j - i) * m;
                double* Xj = X + j * d;
                for (std::size_t kd = 0; kd < d; ++kd) {
                    double s = wbij * b[kd];
                    const double* srow = sig.data() + kd * m;
                    for (std::size_t c = 0; c < m; ++c) s += srow[c] * xi[c];
                    Xj[kd] += s;
                }
            }
        } else {
            if (prescribed) {
                const double* src = prescribed->data() + (n * M + i) * m;
                for (std::size_t c = 0; c < m; ++c) dW[c] = src[c];
            } else {
                for (std::size_t c = 0; c < m; ++c)
                    dW[c] = sqrt_dt * rng::normal_at(ens.seed, stream, rng::kTagIncrement, i, c);
            }
            for (std::size_t kd = 0; kd < d; ++kd) {
                double s = 0.0;
                const double* srow = sig.data() + kd * m;
                for (std::size_t c = 0; c < m; ++c) s += srow[c] * dW[c];
                noise[kd] = s;
            }
            const double* wb = weights.w_b_row(i);
            for (std::size_t j = i + 1; j <= M; ++j) {
                const double wbij = wb[j - i - 1];
                const double f = sigma_row_factors[j - i - 1];
                double* Xj = X + j * d;
                for (std::size_t kd = 0; kd < d; ++kd)
                    Xj[kd] += wbij * b[kd] + f * noise[kd];
            }
        }

        // Accumulators with the same frozen coefficients.
        for (std::size_t kd = 0; kd < d; ++kd) {
            A[(i + 1) * d + kd] = A[i * d + kd] + dt * b[kd];
            double s = 0.0;
            const double* srow = sig.data() + kd * m;
            for (std::size_t c = 0; c < m; ++c) s += srow[c] * dW[c];
            Mt[(i + 1) * d + kd] = Mt[i * d + kd] + s;
        }
    }
}

} // namespace

ParticleEnsemble simulate(const CoefficientModel& model, const KernelSpec& kernel_b,
                          const KernelSpec& kernel_sigma, const Partition& partition,
                          std::size_t particles, std::uint64_t seed, SimMode mode,
                          const InitialCondition& initial, const SimulateOptions& opts) {
    if (particles < 2)
        throw DomainError("simulate: the empirical measure needs at least 2 particles");
    if (initial.dim() != model.dim_state())
        throw DimensionMismatch("simulate: initial condition dimension mismatch");
    if (!opts.stream_labels.empty() && opts.stream_labels.size() != particles)
        throw DomainError("simulate: stream label table has wrong size");
    if (opts.increments && mode == SimMode::variance_matched)
        throw ModeMismatch("simulate: prescribed increments require an increment-driven mode");

    const std::size_t M = partition.steps();
    const std::size_t d = model.dim_state();
    const std::size_t m = model.dim_noise();
    if (opts.increments && opts.increments->size() != particles * M * m)
        throw DomainError("simulate: prescribed increment table has wrong shape");

    std::optional<KernelWeights> own_weights;
    const KernelWeights* weights = opts.weights;
    if (!weights) {
        own_weights.emplace(
            precompute_weights(kernel_b, kernel_sigma, partition, opts.quadrature,
                               opts.threads));
        weights = &*own_weights;
    }
    std::optional<VarianceMatchedFactors> own_factors;
    const VarianceMatchedFactors* factors = opts.factors;
    if (mode == SimMode::variance_matched && !factors) {
        own_factors.emplace(build_variance_matched_factors(kernel_sigma, partition, *weights,
                                                           opts.quadrature, opts.threads));
        factors = &*own_factors;
    }

    ParticleEnsemble ens;
    ens.partition = partition;
    ens.particles = particles;
    ens.dim_state = d;
    ens.dim_noise = m;
    ens.seed = seed;
    ens.mode = mode;
    ens.stream_labels = opts.stream_labels;
    ens.model_label = model.label();
    ens.kernel_b_description = kernel_b.describe();
    ens.kernel_sigma_description = kernel_sigma.describe();

    const std::size_t stride = M + 1;
    ens.state.assign(particles * stride * d, 0.0);
    ens.drift_path.assign(particles * stride * d, 0.0);
    ens.mart_path.assign(particles * stride * d, 0.0);
    ens.increments.assign(particles * M * m, 0.0);

    std::vector<double> x0;
    for (std::size_t n = 0; n < particles; ++n) {
        initial.draw(seed, ens.stream_of(n), x0);
        double* X = ens.state.data() + n * stride * d;
        for (std::size_t j = 0; j <= M; ++j)
            for (std::size_t k = 0; k < d; ++k) X[j * d + k] = x0[k];
        for (std::size_t k = 0; k < d; ++k)
            ens.drift_path[(n * stride) * d + k] = x0[k];
    }

    EmpiricalMeasure mu = ens.marginal(0);
    std::vector<double> sigma_row;
    const auto& times = partition.times();

    for (std::size_t i = 0; i < M; ++i) {
        sigma_row.assign(M - i, 0.0);
        if (mode == SimMode::integrated_kernel) {
            const double inv_dt = 1.0 / partition.dt(i);
            const double* vs = weights->v_sigma_row(i);
            for (std::size_t j = i + 1; j <= M; ++j) sigma_row[j - i - 1] = vs[j - i - 1] * inv_dt;
        } else if (mode == SimMode::left_point) {
            for (std::size_t j = i + 1; j <= M; ++j)
                sigma_row[j - i - 1] = eval(kernel_sigma, times[i], times[j]);
        }

        try {
            parallel_for(particles, opts.threads, [&](std::size_t n0, std::size_t n1) {
                scatter_step(ens, model, *weights, factors, sigma_row, mu, i, opts.increments,
                             n0, n1);
            });
        } catch (const NonFiniteOutput& e) {
            throw NonFiniteState(std::string("simulate: coefficient blow-up at step ") +
                                     std::to_string(i) + ": " + e.what(),
                                 i);
        }

        const std::size_t j = i + 1;
        for (std::size_t n = 0; n < particles; ++n)
            for (std::size_t k = 0; k < d; ++k)
                if (!std::isfinite(ens.state[(n * stride + j) * d + k]))
                    throw NonFiniteState("simulate: particle state blew up at step " +
                                             std::to_string(j),
                                         j);
        mu = ens.marginal(j);
    }
    return ens;
}

ReconstructionReport reconstruct(const ParticleEnsemble& ens, const KernelWeights& weights,
                                 const KernelSpec& kernel_sigma, const CoefficientModel* model,
                                 const QuadratureConfig* cfg, unsigned threads) {
    const std::size_t M = ens.partition.steps();
    const std::size_t d = ens.dim_state;
    const std::size_t m = ens.dim_noise;
    const std::size_t stride = M + 1;
    if (weights.steps() != M) throw GridMismatch("reconstruct: weight table grid mismatch");
    if (!ens.has_accumulators())
        throw MissingAccumulators("reconstruct: ensemble lacks accumulator paths");

    std::optional<VarianceMatchedFactors> factors;
    std::vector<EmpiricalMeasure> marginals;
    if (ens.mode == SimMode::variance_matched) {
        if (!model)
            throw ModeMismatch("reconstruct: variance-matched ensembles need the model to "
                               "recompute diffusion coefficients");
        QuadratureConfig qcfg = cfg ? *cfg : QuadratureConfig{};
        factors.emplace(build_variance_matched_factors(kernel_sigma, ens.partition, weights,
                                                       qcfg, threads));
        marginals.reserve(M);
        for (std::size_t i = 0; i < M; ++i) marginals.push_back(ens.marginal(i));
    }

    const auto& times = ens.partition.times();
    std::vector<double> leftpoint;
    if (ens.mode == SimMode::left_point) {
        leftpoint.assign(M * (M + 1), 0.0);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = i + 1; j <= M; ++j)
                leftpoint[i * (M + 1) + j] = eval(kernel_sigma, times[i], times[j]);
    }

    std::vector<double> worst_per_particle(ens.particles, 0.0);
    std::vector<std::size_t> worst_step(ens.particles, 0);

    parallel_for(ens.particles, threads, [&](std::size_t n0, std::size_t n1) {
        std::vector<double> recon((M + 1) * d);
        std::vector<double> sig(d * m), g, h;
        std::vector<double> bfrozen(d), mart_inc(d);
        for (std::size_t n = n0; n < n1; ++n) {
            const double* X = ens.state.data() + n * stride * d;
            const double* A = ens.drift_path.data() + n * stride * d;
            const double* Mt = ens.mart_path.data() + n * stride * d;

            for (std::size_t j = 0; j <= M; ++j)
                for (std::size_t k = 0; k < d; ++k) recon[j * d + k] = X[k];

            for (std::size_t i = 0; i < M; ++i) {
                const double dt = ens.partition.dt(i);
                const double* wb = weights.w_b_row(i);
                const double* vs = weights.v_sigma_row(i);

                for (std::size_t k = 0; k < d; ++k) {
                    bfrozen[k] = (A[(i + 1) * d + k] - A[i * d + k]) / dt;
                    mart_inc[k] = Mt[(i + 1) * d + k] - Mt[i * d + k];
                }

                if (ens.mode == SimMode::variance_matched) {
                    const auto& F = factors->factor[i];
                    const std::size_t rank = factors->rank[i];
                    const std::size_t rows = M - i + 1;
                    model->diffusion(times[i], std::span<const double>(X + i * d, d),
                                     marginals[i], sig);
                    g.assign(rank * m, 0.0);
                    const std::uint64_t stream = ens.stream_of(n);
                    for (std::size_t k = 0; k < rank; ++k)
                        for (std::size_t c = 0; c < m; ++c)
                            g[k * m + c] = rng::normal_at(ens.seed, stream,
                                                          rng::kTagFactorNoise, i, k * m + c);
                    h.assign(rows * m, 0.0);
                    for (std::size_t a = 1; a < rows; ++a) {
                        const double* Fr = F.data() + a * rank;
                        for (std::size_t c = 0; c < m; ++c) {
                            double s = 0.0;
                            for (std::size_t k = 0; k < rank; ++k) s += Fr[k] * g[k * m + c];
                            h[a * m + c] = s;
                        }
                    }
                    for (std::size_t j = i + 1; j <= M; ++j) {
                        const double wbij = wb[j - i - 1];
                        const double* xi = h.data() + (j - i) * m;
                        for (std::size_t kd = 0; kd < d; ++kd) {
                            double s = wbij * bfrozen[kd];
                            const double* srow = sig.data() + kd * m;
                            for (std::size_t c = 0; c < m; ++c) s += srow[c] * xi[c];
                            recon[j * d + kd] += s;
                        }
                    }
                } else {
                    for (std::size_t j = i + 1; j <= M; ++j) {
                        const double wbij = wb[j - i - 1];
                        const double f = ens.mode == SimMode::integrated_kernel
                                             ? vs[j - i - 1] / dt
                                             : leftpoint[i * (M + 1) + j];
                        for (std::size_t kd = 0; kd < d; ++kd)
                            recon[j * d + kd] += wbij * bfrozen[kd] + f * mart_inc[kd];
                    }
                }
            }

            double worst = 0.0;
            std::size_t at = 0;
            for (std::size_t j = 0; j <= M; ++j)
                for (std::size_t k = 0; k < d; ++k) {
                    const double xv = X[j * d + k];
                    const double res = std::abs(recon[j * d + k] - xv) / (1.0 + std::abs(xv));
                    if (res > worst) {
                        worst = res;
                        at = j;
                    }
                }
            worst_per_particle[n] = worst;
            worst_step[n] = at;
        }
    });

    ReconstructionReport report;
    for (std::size_t n = 0; n < ens.particles; ++n) {
        if (worst_per_particle[n] > report.max_rel_residual) {
            report.max_rel_residual = worst_per_particle[n];
            report.worst_particle = n;
            report.worst_step = worst_step[n];
        }
    }
    report.pass = report.max_rel_residual <= 1e-10;
    return report;
}

} // namespace sve
