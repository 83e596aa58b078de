#include "sve/numeric.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace sve {

void ExactSum::add(double x) {
    // Shewchuk's growing-expansion update: partials_ stays a list of
    // non-overlapping doubles whose exact sum equals the running total.
    std::size_t used = 0;
    for (double y : partials_) {
        if (std::abs(x) < std::abs(y)) std::swap(x, y);
        const double hi = x + y;
        const double lo = y - (hi - x);
        if (lo != 0.0) partials_[used++] = lo;
        x = hi;
    }
    partials_.resize(used);
    partials_.push_back(x);
}

double ExactSum::result() const {
    double s = 0.0;
    for (double p : partials_) s += p;
    return s;
}

double exact_sum(std::span<const double> xs) {
    ExactSum acc;
    for (double x : xs) acc.add(x);
    return acc.result();
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> x) {
    return std::sqrt(dot(x, x));
}

SampleStats sample_stats(std::span<const double> xs) {
    SampleStats st;
    st.n = xs.size();
    if (st.n == 0) return st;
    double s = 0.0;
    for (double x : xs) s += x;
    st.mean = s / static_cast<double>(st.n);
    if (st.n < 2) return st;
    double ss = 0.0;
    for (double x : xs) {
        const double d = x - st.mean;
        ss += d * d;
    }
    st.sd = std::sqrt(ss / static_cast<double>(st.n - 1));
    st.se_mean = st.sd / std::sqrt(static_cast<double>(st.n));
    return st;
}

double jackknife_variance_se(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 3) return 0.0;
    double s1 = 0.0, s2 = 0.0;
    for (double x : xs) {
        s1 += x;
        s2 += x * x;
    }
    // Delete-one variance (population form, matching the plug-in estimator).
    const double nn = static_cast<double>(n);
    std::vector<double> loo(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double m = (s1 - xs[i]) / (nn - 1.0);
        loo[i] = (s2 - xs[i] * xs[i]) / (nn - 1.0) - m * m;
    }
    double lm = 0.0;
    for (double v : loo) lm += v;
    lm /= nn;
    double ss = 0.0;
    for (double v : loo) {
        const double d = v - lm;
        ss += d * d;
    }
    return std::sqrt((nn - 1.0) / nn * ss);
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    LinearFit fit;
    const std::size_t n = xs.size();
    if (n != ys.size() || n < 2) throw std::invalid_argument("linear_fit: need >= 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty set");
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    if (threads <= 1 || count == 1) {
        fn(0, count);
        return;
    }
    const unsigned k = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    std::vector<std::thread> pool;
    pool.reserve(k);
    const std::size_t chunk = (count + k - 1) / k;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    for (unsigned w = 0; w < k; ++w) {
        const std::size_t lo = static_cast<std::size_t>(w) * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

PivotedCholesky pivoted_cholesky(std::vector<double> G, std::size_t n, double rel_tol) {
    PivotedCholesky out;
    out.n = n;
    if (n == 0) return out;

    std::vector<double> diag_orig(n);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) diag_orig[i] = d[i] = G[i * n + i];

    double trace = 0.0;
    for (double v : d) trace += std::max(v, 0.0);
    const double cutoff = std::max(rel_tol * trace, 0.0);

    std::vector<std::vector<double>> cols;
    std::vector<char> used(n, 0);

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = n;
        double best = cutoff;
        for (std::size_t j = 0; j < n; ++j) {
            if (!used[j] && d[j] > best) {
                best = d[j];
                p = j;
            }
        }
        if (p == n) break;
        used[p] = 1;
        const double lpp = std::sqrt(d[p]);
        std::vector<double> col(n, 0.0);
        col[p] = lpp;
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            double v = G[j * n + p];
            for (const auto& c : cols) v -= c[j] * c[p];
            const double ljk = v / lpp;
            col[j] = ljk;
            d[j] -= ljk * ljk;
        }
        cols.push_back(std::move(col));
    }

    out.rank = cols.size();
    out.factor.assign(n * out.rank, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < out.rank; ++k)
            out.factor[i * out.rank + k] = cols[k][i];

    // Rescale rows so the reproduced diagonal matches G exactly; truncation
    // otherwise leaves the marginal variances slightly short.
    for (std::size_t i = 0; i < n; ++i) {
        if (diag_orig[i] <= 0.0) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < out.rank; ++k) {
            const double f = out.factor[i * out.rank + k];
            s += f * f;
        }
        if (s > 0.0) {
            const double scale = std::sqrt(diag_orig[i] / s);
            for (std::size_t k = 0; k < out.rank; ++k) out.factor[i * out.rank + k] *= scale;
        }
    }
    return out;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace sve
