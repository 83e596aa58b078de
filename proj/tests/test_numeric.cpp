#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sve/numeric.hpp"

using namespace sve;

TEST_CASE("exact sum is independent of addition order") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> mag(-30.0, 30.0);
    std::vector<double> xs(200);
    for (auto& x : xs) x = std::ldexp(mag(gen), static_cast<int>(mag(gen)));

    ExactSum a;
    for (double x : xs) a.add(x);
    std::vector<double> shuffled = xs;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    ExactSum b;
    for (double x : shuffled) b.add(x);
    CHECK(a.result() == b.result());
}

TEST_CASE("exact sum cancels catastrophic terms") {
    ExactSum s;
    s.add(1e16);
    s.add(1.0);
    s.add(-1e16);
    CHECK(s.result() == 1.0);
}

TEST_CASE("sample stats and jackknife") {
    std::vector<double> xs = {1.0, 2.0, 3.0, 4.0, 5.0};
    const SampleStats st = sample_stats(xs);
    CHECK(st.mean == doctest::Approx(3.0));
    CHECK(st.sd == doctest::Approx(std::sqrt(2.5)));
    CHECK(st.se_mean == doctest::Approx(std::sqrt(2.5 / 5.0)));
    CHECK(jackknife_variance_se(xs) > 0.0);
}

TEST_CASE("linear fit recovers an exact line") {
    std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.5 * x - 1.0);
    const LinearFit fit = linear_fit(xs, ys);
    CHECK(fit.slope == doctest::Approx(2.5));
    CHECK(fit.intercept == doctest::Approx(-1.0));
    CHECK(fit.r_squared == doctest::Approx(1.0));
}

TEST_CASE("median of even and odd sets") {
    CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
}

TEST_CASE("parallel_for covers the range once and propagates errors") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) hits[i] += 1;
    });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 1000);

    CHECK_THROWS_AS(parallel_for(8, 4,
                                 [](std::size_t, std::size_t) {
                                     throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("pivoted cholesky reproduces a PSD matrix and truncates rank") {
    // rank-2 PSD 4x4
    const std::vector<double> u = {1.0, 2.0, -1.0, 0.5};
    const std::vector<double> v = {0.0, 1.0, 1.0, -2.0};
    std::vector<double> G(16, 0.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) G[i * 4 + j] = u[i] * u[j] + v[i] * v[j];

    const PivotedCholesky pc = pivoted_cholesky(G, 4, 1e-12);
    CHECK(pc.rank == 2);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < pc.rank; ++k)
                s += pc.factor[i * pc.rank + k] * pc.factor[j * pc.rank + k];
            CHECK(s == doctest::Approx(G[i * 4 + j]).epsilon(1e-10));
        }
}
