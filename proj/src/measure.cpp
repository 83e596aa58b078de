#include "sve/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "sve/errors.hpp"
#include "sve/numeric.hpp"
#include "sve/rng.hpp"

namespace sve {

struct EmpiricalMeasure::MomentCache {
    std::mutex mutex;
    std::map<double, double> values;
};

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms_flat, std::size_t dim)
    : dim_(dim), data_(std::move(atoms_flat)), cache_(std::make_shared<MomentCache>()) {
    if (dim_ == 0) throw DomainError("EmpiricalMeasure: dimension must be positive");
    if (data_.empty() || data_.size() % dim_ != 0)
        throw DomainError("EmpiricalMeasure: atom data does not match dimension");
    count_ = data_.size() / dim_;
    for (double v : data_)
        if (!std::isfinite(v)) throw DomainError("EmpiricalMeasure: non-finite atom");
    mean_.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
        ExactSum acc;
        for (std::size_t i = 0; i < count_; ++i) acc.add(data_[i * dim_ + k]);
        mean_[k] = acc.result() / static_cast<double>(count_);
    }
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::vector<double> point) {
    const std::size_t d = point.size();
    return EmpiricalMeasure(std::move(point), d);
}

double EmpiricalMeasure::moment(double eta) const {
    if (!(eta >= 1.0)) throw DomainError("moment: eta must be >= 1");
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        auto it = cache_->values.find(eta);
        if (it != cache_->values.end()) return it->second;
    }
    ExactSum acc;
    for (std::size_t i = 0; i < count_; ++i)
        acc.add(std::pow(norm2(atom(i)), eta));
    const double value = std::pow(acc.result() / static_cast<double>(count_), 1.0 / eta);
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->values.emplace(eta, value);
    return value;
}

namespace detail {

double solve_assignment(const std::vector<double>& cost, std::size_t n,
                        std::vector<std::size_t>& row_to_col) {
    // Jonker-Volgenant style shortest augmenting path with dual potentials.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> way(n + 1, 0), p(n + 1, n);

    for (std::size_t i = 0; i < n; ++i) {
        p[n] = i;
        std::size_t j0 = n;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = n;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 * n + j] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != n);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != n);
    }

    row_to_col.assign(n, n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (p[j] == n) continue;
        row_to_col[p[j]] = j;
        total += cost[p[j] * n + j];
    }
    return total;
}

} // namespace detail

namespace {

double sorted_1d_cost(std::vector<double> xs, std::vector<double> ys, double eta) {
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    ExactSum acc;
    for (std::size_t i = 0; i < xs.size(); ++i)
        acc.add(std::pow(std::abs(xs[i] - ys[i]), eta));
    return acc.result() / static_cast<double>(xs.size());
}

} // namespace

WassersteinResult wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                              double eta, const WassersteinOptions& opts) {
    if (mu.dim() != nu.dim())
        throw DimensionMismatch("wasserstein: measures have different dimensions");
    if (mu.size() != nu.size())
        throw SizeMismatch("wasserstein: measures have different atom counts");
    if (!(eta >= 1.0)) throw DomainError("wasserstein: eta must be >= 1");

    const std::size_t n = mu.size();
    const std::size_t d = mu.dim();
    WassersteinResult res;

    if (d == 1) {
        std::vector<double> xs(mu.flat().begin(), mu.flat().end());
        std::vector<double> ys(nu.flat().begin(), nu.flat().end());
        res.value = std::pow(sorted_1d_cost(std::move(xs), std::move(ys), eta), 1.0 / eta);
        return res;
    }

    if (n <= opts.n_exact) {
        std::vector<double> cost(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = mu.atom(i);
            for (std::size_t j = 0; j < n; ++j) {
                const auto yj = nu.atom(j);
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = xi[k] - yj[k];
                    s += diff * diff;
                }
                cost[i * n + j] = std::pow(std::sqrt(s), eta);
            }
        }
        std::vector<std::size_t> assign;
        const double total = detail::solve_assignment(cost, n, assign);
        res.value = std::pow(total / static_cast<double>(n), 1.0 / eta);
        return res;
    }

    // Sliced approximation: average the 1-d cost over random directions.
    ExactSum acc;
    std::vector<double> dir(d), px(n), py(n);
    for (std::size_t s = 0; s < opts.slices; ++s) {
        double nrm = 0.0;
        do {
            for (std::size_t k = 0; k < d; ++k)
                dir[k] = rng::normal(opts.slice_seed, s, k);
            nrm = norm2(dir);
        } while (nrm == 0.0);
        for (std::size_t k = 0; k < d; ++k) dir[k] /= nrm;
        for (std::size_t i = 0; i < n; ++i) {
            px[i] = dot(mu.atom(i), dir);
            py[i] = dot(nu.atom(i), dir);
        }
        acc.add(sorted_1d_cost(px, py, eta));
    }
    res.value = std::pow(acc.result() / static_cast<double>(opts.slices), 1.0 / eta);
    res.approximate = true;
    return res;
}

PathBoundReport path_wasserstein_bound_check(std::span<const double> paths_a,
                                             std::span<const double> paths_b,
                                             std::size_t particles, std::size_t times,
                                             std::size_t dim, double eta,
                                             const WassersteinOptions& opts) {
    const std::size_t expect = particles * times * dim;
    if (paths_a.size() != expect || paths_b.size() != expect)
        throw GridMismatch("path_wasserstein_bound_check: path arrays do not match the grid");
    if (!(eta >= 1.0)) throw DomainError("path_wasserstein_bound_check: eta must be >= 1");

    PathBoundReport report;

    // Pathwise cost of the index coupling under the sup norm.
    ExactSum cost;
    std::vector<double> diff(dim);
    for (std::size_t n = 0; n < particles; ++n) {
        double sup = 0.0;
        for (std::size_t j = 0; j < times; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = paths_a[(n * times + j) * dim + k] -
                                 paths_b[(n * times + j) * dim + k];
                s += d * d;
            }
            sup = std::max(sup, std::sqrt(s));
        }
        cost.add(std::pow(sup, eta));
    }
    report.pathwise_bound =
        std::pow(cost.result() / static_cast<double>(particles), 1.0 / eta);

    report.marginal_distance.resize(times);
    std::vector<double> atoms_a(particles * dim), atoms_b(particles * dim);
    for (std::size_t j = 0; j < times; ++j) {
        for (std::size_t n = 0; n < particles; ++n)
            for (std::size_t k = 0; k < dim; ++k) {
                atoms_a[n * dim + k] = paths_a[(n * times + j) * dim + k];
                atoms_b[n * dim + k] = paths_b[(n * times + j) * dim + k];
            }
        const EmpiricalMeasure mu(atoms_a, dim);
        const EmpiricalMeasure nu(atoms_b, dim);
        report.marginal_distance[j] = wasserstein(mu, nu, eta, opts).value;
    }

    report.max_violation = -std::numeric_limits<double>::infinity();
    for (double w : report.marginal_distance)
        report.max_violation = std::max(report.max_violation, w - report.pathwise_bound);
    const double tol = 1e-9 * (1.0 + report.pathwise_bound);
    report.pass = report.max_violation <= tol;
    return report;
}

} // namespace sve
