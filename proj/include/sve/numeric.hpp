#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sve {

/// Exact floating-point accumulator (Shewchuk expansion sum).
///
/// The rounded result is independent of the order in which values are added,
/// which makes ensemble statistics invariant under particle permutation.
class ExactSum {
public:
    void add(double x);
    double result() const;
    void reset() { partials_.clear(); }

private:
    std::vector<double> partials_;
};

double exact_sum(std::span<const double> xs);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> x);

struct SampleStats {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;        // ddof = 1
    double se_mean = 0.0;   // sd / sqrt(n); equals the jackknife SE of the mean
};

SampleStats sample_stats(std::span<const double> xs);

/// Jackknife standard error of the sample variance (delete-one, O(n)).
double jackknife_variance_se(std::span<const double> xs);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

double median(std::vector<double> xs); // takes a copy, partial-sorts

/// Runs fn(begin, end) on contiguous chunks of [0, count) across `threads`
/// workers. With threads <= 1 the call is inline. Chunk boundaries depend on
/// the thread count, so fn must only write to per-index slots.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

/// Pivoted Cholesky factorization of a symmetric PSD matrix.
///
/// On return, factor is n x rank (row-major, rows in original index order)
/// with G ~= factor * factor^T. Truncates once the residual trace falls below
/// rel_tol * trace(G). Rows are rescaled afterwards so the reproduced diagonal
/// matches G's diagonal exactly wherever it is positive.
struct PivotedCholesky {
    std::vector<double> factor;
    std::size_t n = 0;
    std::size_t rank = 0;
};

PivotedCholesky pivoted_cholesky(std::vector<double> G, std::size_t n, double rel_tol);

/// FNV-1a over raw bytes; used for grid/content hashes in serialized outputs.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ull);

} // namespace sve
