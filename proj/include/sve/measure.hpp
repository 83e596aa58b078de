#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

namespace sve {

/// Uniform empirical probability measure: N atoms in R^d, weight 1/N each.
/// Immutable after construction. The mean and eta-moments are computed with
/// order-independent exact summation, so all derived quantities are invariant
/// under atom permutation bit-for-bit.
class EmpiricalMeasure {
public:
    EmpiricalMeasure(std::vector<double> atoms_flat, std::size_t dim);

    static EmpiricalMeasure dirac(std::vector<double> point);

    std::size_t size() const { return count_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> atom(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<const double> flat() const { return data_; }
    std::span<const double> mean() const { return mean_; }

    /// ((1/N) sum |x_i|^eta)^{1/eta} = W_eta(delta_0, mu); requires eta >= 1.
    double moment(double eta) const;

private:
    std::size_t count_;
    std::size_t dim_;
    std::vector<double> data_;
    std::vector<double> mean_;
    struct MomentCache;
    std::shared_ptr<MomentCache> cache_;
};

struct WassersteinOptions {
    std::size_t n_exact = 512;   // exact assignment up to this atom count (d > 1)
    std::size_t slices = 64;     // projections for the sliced approximation
    std::uint64_t slice_seed = 0x5143E5ull;
};

struct WassersteinResult {
    double value = 0.0;
    bool approximate = false;
};

/// W_eta between equal-size empirical measures. d = 1: exact monotone
/// rearrangement; d > 1 and N <= n_exact: exact optimal assignment; larger N:
/// sliced approximation (flagged). Throws DimensionMismatch / SizeMismatch.
WassersteinResult wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                              double eta, const WassersteinOptions& opts = {});

/// Checks, marginal by marginal, that W_eta(mu_t, nu_t) never exceeds the
/// pathwise sup-norm transport cost of the index coupling. paths_* are
/// particle-major: value(n, j, k) = paths[(n*times + j)*dim + k].
struct PathBoundReport {
    std::vector<double> marginal_distance;
    double pathwise_bound = 0.0;
    double max_violation = 0.0;
    bool pass = false;
};

PathBoundReport path_wasserstein_bound_check(std::span<const double> paths_a,
                                             std::span<const double> paths_b,
                                             std::size_t particles, std::size_t times,
                                             std::size_t dim, double eta,
                                             const WassersteinOptions& opts = {});

namespace detail {
/// Exact minimum-cost perfect matching on an n x n cost matrix (row-major),
/// O(n^3) shortest augmenting paths. Returns total cost; fills row->col.
double solve_assignment(const std::vector<double>& cost, std::size_t n,
                        std::vector<std::size_t>& row_to_col);
} // namespace detail

} // namespace sve
