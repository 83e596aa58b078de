#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sve/diagnostics.hpp"
#include "sve/errors.hpp"
#include "sve/numeric.hpp"

using namespace sve;

namespace {

const QuadratureConfig qcfg{};

CoefficientModel zero_model() {
    return custom_model(
        "zero", 1, 1, 2.0, 1.0,
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = 0.0;
        },
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = 0.0;
        });
}

CoefficientModel constant_drift(double c) {
    return custom_model(
        "constant_drift", 1, 1, 2.0, std::abs(c) + 1.0,
        [c](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = c;
        },
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = 0.0;
        });
}

/// Ensemble wrapper around externally generated scalar paths.
ParticleEnsemble synthetic_ensemble(const std::vector<std::vector<double>>& paths,
                                    const Partition& part) {
    ParticleEnsemble ens;
    ens.partition = part;
    ens.particles = paths.size();
    ens.dim_state = 1;
    ens.dim_noise = 1;
    const std::size_t stride = part.steps() + 1;
    ens.state.assign(ens.particles * stride, 0.0);
    for (std::size_t n = 0; n < ens.particles; ++n)
        for (std::size_t j = 0; j < stride; ++j) ens.state[n * stride + j] = paths[n][j];
    return ens;
}

std::vector<TestFunction> two_test_functions() {
    return {TestFunction("lin", TestFunction::Shape::bump_linear, {0.0}, 4.0, 1.0, {1.0}, {}),
            TestFunction("quad", TestFunction::Shape::bump_quadratic, {0.2}, 5.0, 0.5, {1.0},
                         {0.5})};
}

} // namespace

TEST_CASE("test function: compact support and interior values") {
    const TestFunction f("q", TestFunction::Shape::bump_quadratic, {0.5}, 1.0, 1.0, {2.0},
                         {1.0});
    CHECK(f.value(std::vector<double>{1.0}) == doctest::Approx(1.0 + 2.0 * 0.5 + 0.25));
    CHECK(f.value(std::vector<double>{3.0}) == 0.0);
    std::vector<double> g(1), H(1);
    f.gradient(std::vector<double>{3.0}, g);
    f.hessian(std::vector<double>{3.0}, H);
    CHECK(g[0] == 0.0);
    CHECK(H[0] == 0.0);
}

TEST_CASE("test function derivatives agree with finite differences") {
    const std::vector<TestFunction> fns = {
        TestFunction("l1", TestFunction::Shape::bump_linear, {0.1, -0.2}, 0.8, 1.0, {1.0, -0.5},
                     {}),
        TestFunction("q1", TestFunction::Shape::bump_quadratic, {0.0, 0.3}, 1.1, 0.5,
                     {0.2, 1.0}, {1.0, 0.25, 0.25, -0.5}),
    };
    const double h = 1e-5;
    for (const auto& f : fns) {
        const std::size_t d = f.dim();
        std::vector<double> grad(d), hess(d * d);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> z(d);
            for (std::size_t k = 0; k < d; ++k)
                z[k] = 3.0 * (2.0 * rng::uniform_open(77, trial, k, 0) - 1.0);
            f.gradient(z, grad);
            f.hessian(z, hess);
            for (std::size_t k = 0; k < d; ++k) {
                std::vector<double> zp = z, zm = z;
                zp[k] += h;
                zm[k] -= h;
                const double fd = (f.value(zp) - f.value(zm)) / (2.0 * h);
                CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
                for (std::size_t l = 0; l < d; ++l) {
                    std::vector<double> zpp = z, zpm = z, zmp = z, zmm = z;
                    zpp[k] += h;
                    zpp[l] += h;
                    zpm[k] += h;
                    zpm[l] -= h;
                    zmp[k] -= h;
                    zmp[l] += h;
                    zmm[k] -= h;
                    zmm[l] -= h;
                    const double fd2 = (f.value(zpp) - f.value(zpm) - f.value(zmp) +
                                        f.value(zmm)) /
                                       (4.0 * h * h);
                    CHECK(hess[k * d + l] == doctest::Approx(fd2).epsilon(1e-4).scale(1.0));
                }
            }
        }
    }
}

TEST_CASE("moment report and increment scaling are permutation-invariant") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 64);
    const auto init = InitialCondition::gaussian({0.0}, {1.0});
    const ParticleEnsemble ens = simulate(mean_field_ou(1.0, 1.0), one, one, part, 128, 55,
                                          SimMode::integrated_kernel, init);
    // reverse the particle blocks
    ParticleEnsemble rev = ens;
    const std::size_t stride = (part.steps() + 1) * ens.dim_state;
    for (std::size_t n = 0; n < ens.particles; ++n)
        for (std::size_t k = 0; k < stride; ++k)
            rev.state[n * stride + k] = ens.state[(ens.particles - 1 - n) * stride + k];

    const MomentTable a = moment_report(ens, {2.0, 4.0});
    const MomentTable b = moment_report(rev, {2.0, 4.0});
    CHECK(a.estimate == b.estimate); // bit-for-bit
    CHECK(a.std_error == b.std_error);

    const IncrementFit fa = increment_scaling(ens, 2.0, {1, 2, 4, 8, 16, 32});
    const IncrementFit fb = increment_scaling(rev, 2.0, {1, 2, 4, 8, 16, 32});
    CHECK(fa.mean_abs_power == fb.mean_abs_power);
    CHECK(fa.slope == fb.slope);
}

TEST_CASE("moment report: frozen state has unit moments") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 8);
    const auto init = InitialCondition::point_mass({1.0});
    const ParticleEnsemble ens =
        simulate(zero_model(), one, one, part, 16, 3, SimMode::integrated_kernel, init);
    const MomentTable table = moment_report(ens, {1.0, 2.0, 4.0});
    for (double v : table.estimate) CHECK(v == doctest::Approx(1.0));
    for (double v : table.std_error) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("moment report: Brownian moments match Gaussian values") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 64);
    const auto init = InitialCondition::point_mass({0.0});
    const ParticleEnsemble ens =
        simulate(pure_noise(1.0), one, one, part, 10000, 5, SimMode::integrated_kernel, init);
    const MomentTable table = moment_report(ens, {2.0, 4.0});
    for (std::size_t j : {16u, 32u, 64u}) {
        const double t = part.times()[j];
        CHECK(std::abs(table.at(j, 0) - t) <= 3.0 * table.se(j, 0));
        CHECK(std::abs(table.at(j, 1) - 3.0 * t * t) <= 3.0 * table.se(j, 1));
    }
    const Partition part2 = Partition::uniform(1.0, 32);
    const ParticleEnsemble ens2 =
        simulate(pure_noise(1.0), one, one, part2, 10000, 6, SimMode::integrated_kernel, init);
    const MomentComparison cmp = compare_moment_tables(table, moment_report(ens2, {2.0, 4.0}));
    CHECK(cmp.pass);
}

TEST_CASE("increment scaling: Brownian slope near 1") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 256);
    const auto init = InitialCondition::point_mass({0.0});
    const ParticleEnsemble ens =
        simulate(pure_noise(1.0), one, one, part, 4000, 7, SimMode::integrated_kernel, init);
    const IncrementFit fit = increment_scaling(ens, 2.0, {2, 4, 8, 16, 32, 64});
    CHECK_FALSE(fit.degenerate);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.1));
    CHECK(fit.r_squared > 0.99);
}

TEST_CASE("increment scaling: Riemann-Liouville slope near 1 - 2 alpha") {
    const auto one = KernelSpec::constant(1.0);
    const auto frac = KernelSpec::fractional(1.0, 0.25);
    const Partition part = Partition::uniform(1.0, 256);
    const auto init = InitialCondition::point_mass({0.0});
    const ParticleEnsemble ens =
        simulate(pure_noise(1.0), one, frac, part, 4000, 9, SimMode::integrated_kernel, init);
    const IncrementFit fit = increment_scaling(ens, 2.0, {4, 8, 16, 32, 64, 128});
    CHECK(fit.slope == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("increment scaling: degenerate and invalid lag sets") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 64);
    const auto init = InitialCondition::point_mass({1.0});
    const ParticleEnsemble ens =
        simulate(zero_model(), one, one, part, 8, 3, SimMode::integrated_kernel, init);
    const IncrementFit fit = increment_scaling(ens, 2.0, {1, 2, 4, 8, 16, 32});
    CHECK(fit.degenerate);
    CHECK_THROWS_AS(increment_scaling(ens, 2.0, {1, 2}), InsufficientLags);
    CHECK_THROWS_AS(increment_scaling(ens, 2.0, {4}), InsufficientLags);
}

TEST_CASE("increment scaling applies to accumulator paths") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 128);
    const auto init = InitialCondition::point_mass({0.0});
    const ParticleEnsemble ens = simulate(mean_field_ou(1.0, 1.0), one, one, part, 2000, 11,
                                          SimMode::integrated_kernel, init);
    const IncrementFit mart_fit = increment_scaling_on(ens.mart_path, ens.partition,
                                                       ens.particles, ens.dim_state, 2.0,
                                                       {2, 4, 8, 16, 32, 64});
    CHECK(mart_fit.slope == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("holder estimate: smooth, Brownian, and fractional paths") {
    const Partition part = Partition::uniform(1.0, 256);

    SUBCASE("linear deterministic paths have exponent ~ 1") {
        const auto one = KernelSpec::constant(1.0);
        const auto init = InitialCondition::gaussian({0.0}, {1.0});
        const ParticleEnsemble ens =
            simulate(constant_drift(1.0), one, one, part, 64, 13, SimMode::integrated_kernel,
                     init);
        const HolderEstimate est = holder_estimate(ens);
        CHECK(est.exponent == doctest::Approx(1.0).epsilon(0.05));
    }

    SUBCASE("exact Brownian paths calibrate near 1/2") {
        const oracle::GaussianPathSampler sampler(
            [](double s, double t) { return std::min(s, t); }, part.times());
        std::vector<std::vector<double>> paths;
        for (std::size_t n = 0; n < 256; ++n) paths.push_back(sampler.draw(101, n));
        const HolderEstimate est = holder_estimate(synthetic_ensemble(paths, part));
        CHECK(est.exponent == doctest::Approx(0.5).epsilon(0.2));
    }

    SUBCASE("exact Riemann-Liouville paths calibrate near alpha") {
        auto cov = [](double s, double t) {
            const double lo = std::min(s, t);
            return oracle::fixed_grid_integral(
                [&](double u) {
                    return std::pow(s - lo + u, -0.25) * std::pow(t - lo + u, -0.25);
                },
                lo, 1024);
        };
        const oracle::GaussianPathSampler sampler(cov, part.times());
        std::vector<std::vector<double>> paths;
        for (std::size_t n = 0; n < 128; ++n) paths.push_back(sampler.draw(103, n));
        const HolderEstimate est = holder_estimate(synthetic_ensemble(paths, part));
        CHECK(est.exponent == doctest::Approx(0.25).epsilon(0.45));
    }

    SUBCASE("requires at least 64 steps") {
        const auto one = KernelSpec::constant(1.0);
        const Partition small = Partition::uniform(1.0, 32);
        const auto init = InitialCondition::point_mass({0.0});
        const ParticleEnsemble ens =
            simulate(pure_noise(1.0), one, one, small, 8, 3, SimMode::integrated_kernel, init);
        CHECK_THROWS_AS(holder_estimate(ens), DomainError);
    }
}

TEST_CASE("martingale defect: zero coefficients give exactly zero statistics") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 16);
    const auto init = InitialCondition::gaussian({0.0}, {1.0});
    const ParticleEnsemble ens =
        simulate(zero_model(), one, one, part, 64, 15, SimMode::integrated_kernel, init);
    const MartingaleReport rep = martingale_defect(ens, zero_model(), two_test_functions(),
                                                   default_time_pairs(16));
    for (const auto& s : rep.stats) {
        CHECK(s.statistic == 0.0);
        CHECK(s.z == 0.0);
    }
    CHECK(rep.pass);
}

TEST_CASE("martingale defect: Brownian ensemble passes, doubled drift fails") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 100);
    const auto init = InitialCondition::point_mass({0.0});
    const auto model = mean_field_ou(1.0, 1.0);
    SimulateOptions opts;
    opts.threads = 2;
    const ParticleEnsemble ens =
        simulate(model, one, one, part, 10000, 19, SimMode::integrated_kernel, init, opts);

    std::vector<double> center{0.0};
    const auto functions = default_test_functions(1, 6, center, 0.7);
    const auto pairs = default_time_pairs(100);

    const MartingaleReport good = martingale_defect(ens, model, functions, pairs, 3.0, 2);
    CHECK(good.pass);

    const MartingaleReport bad =
        martingale_defect(ens, model, functions, pairs, 3.0, 2, /*drift_scale=*/2.0);
    CHECK_FALSE(bad.pass);
    CHECK(bad.max_abs_z > 3.0);
}

TEST_CASE("martingale defect validation") {
    const auto one = KernelSpec::constant(1.0);
    const Partition part = Partition::uniform(1.0, 8);
    const auto init = InitialCondition::point_mass({0.0});
    ParticleEnsemble ens =
        simulate(pure_noise(1.0), one, one, part, 8, 3, SimMode::integrated_kernel, init);
    ens.drift_path.clear();
    CHECK_THROWS_AS(
        martingale_defect(ens, pure_noise(1.0), two_test_functions(), default_time_pairs(8)),
        MissingAccumulators);
}

TEST_CASE("refinement study: Brownian exactness and OU particle ladder") {
    const auto one = KernelSpec::constant(1.0);
    const auto init = InitialCondition::point_mass({0.0});
    RefinementStudyConfig cfg;
    cfg.mesh_steps = {16, 32, 64};
    cfg.particle_counts = {250, 1000, 4000};
    cfg.mesh_particles = 512;
    cfg.particle_mesh_steps = 32;
    cfg.threads = 2;

    const RefinementReport rep = refinement_study(pure_noise(1.0), one, one, 1.0, init, 21,
                                                  SimMode::integrated_kernel, cfg);
    for (const auto& d : rep.mesh_distances) CHECK(d.distance <= 1e-12);

    const RefinementReport ou = refinement_study(mean_field_ou(1.0, 1.0), one, one, 1.0, init,
                                                 23, SimMode::integrated_kernel, cfg);
    CHECK(ou.particle_distances.size() == 2);
    CHECK(ou.particle_decreasing);
}

TEST_CASE("refinement study validation") {
    const auto one = KernelSpec::constant(1.0);
    const auto init = InitialCondition::point_mass({0.0});
    RefinementStudyConfig cfg;
    cfg.mesh_steps = {16, 32};
    cfg.particle_counts = {100, 400};
    CHECK_THROWS_AS(refinement_study(pure_noise(1.0), one, one, 1.0, init, 1,
                                     SimMode::integrated_kernel, cfg),
                    LadderTooShort);
    cfg.mesh_steps = {16, 32, 64};
    cfg.particle_counts = {100};
    CHECK_THROWS_AS(refinement_study(pure_noise(1.0), one, one, 1.0, init, 1,
                                     SimMode::integrated_kernel, cfg),
                    LadderTooShort);
    cfg.particle_counts = {100, 400};
    cfg.mesh_steps = {16, 24, 64};
    CHECK_THROWS_AS(refinement_study(pure_noise(1.0), one, one, 1.0, init, 1,
                                     SimMode::integrated_kernel, cfg),
                    GridMismatch);
}

TEST_CASE("nested increments aggregate children exactly") {
    const auto dw_fine = nested_increments(77, 4, 64, 64, 1, 1.0);
    const auto dw_coarse = nested_increments(77, 4, 64, 16, 1, 1.0);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 16; ++i) {
            double s = 0.0;
            for (std::size_t r = 0; r < 4; ++r) s += dw_fine[n * 64 + i * 4 + r];
            CHECK(dw_coarse[n * 16 + i] == doctest::Approx(s).epsilon(1e-15));
        }
}

TEST_CASE("frozen integral convergence") {
    const auto one = KernelSpec::constant(1.0);
    const auto frac = KernelSpec::fractional(1.0, 0.25);
    const auto init = InitialCondition::gaussian({0.0}, {1.0});
    const auto model = scalar_interaction(-0.5, 1.0, 0.5);

    std::vector<ParticleEnsemble> ladder;
    const std::size_t fine = 128;
    for (std::size_t steps : {16u, 32u, 64u, 128u}) {
        const Partition part = Partition::uniform(1.0, steps);
        const auto dw = nested_increments(91, 256, fine, steps, 1, 1.0);
        SimulateOptions opts;
        opts.increments = &dw;
        opts.threads = 2;
        ladder.push_back(
            simulate(model, one, frac, part, 256, 91, SimMode::integrated_kernel, init, opts));
    }
    std::vector<const ParticleEnsemble*> ptrs;
    for (const auto& e : ladder) ptrs.push_back(&e);

    SUBCASE("constant integrand with constant kernel is exact at every level") {
        const FrozenIntegralReport rep = frozen_integral_convergence(
            ptrs, one,
            [](double, std::span<const double>, const EmpiricalMeasure&) { return 1.0; }, qcfg,
            2);
        for (double d : rep.sup_difference) CHECK(d <= 1e-12);
    }
    SUBCASE("state integrand differences decrease with the mesh") {
        const FrozenIntegralReport rep = frozen_integral_convergence(
            ptrs, one,
            [](double, std::span<const double> x, const EmpiricalMeasure&) { return x[0]; },
            qcfg, 2);
        CHECK(rep.decreasing);
    }
    SUBCASE("measure integrand with the fractional kernel decreases") {
        const FrozenIntegralReport rep = frozen_integral_convergence(
            ptrs, frac,
            [](double, std::span<const double>, const EmpiricalMeasure& mu) {
                const double m = mu.moment(2.0);
                return m * m * m * m;
            },
            qcfg, 2);
        CHECK(rep.decreasing);
    }
    SUBCASE("grid nesting is enforced") {
        const Partition part = Partition::uniform(1.0, 24);
        const ParticleEnsemble odd =
            simulate(model, one, frac, part, 256, 91, SimMode::integrated_kernel, init);
        std::vector<const ParticleEnsemble*> bad = {&odd, ptrs.back()};
        CHECK_THROWS_AS(frozen_integral_convergence(
                            bad, one,
                            [](double, std::span<const double>, const EmpiricalMeasure&) {
                                return 1.0;
                            },
                            qcfg, 1),
                        GridMismatch);
    }
}
