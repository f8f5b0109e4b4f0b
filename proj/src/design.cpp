#include "failcal/design.hpp"

#include "failcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace failcal {

Design latin_hypercube(Eigen::Index n, Eigen::Index dim, Rng &rng) {
    if (n < 1 || dim < 1) throw InvalidArgument("latin_hypercube: n and dim must be positive");
    Design d(n, dim);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < dim; ++c) {
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        // Fisher-Yates with the library generator, so designs are reproducible across platforms.
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        for (Eigen::Index r = 0; r < n; ++r) {
            d(r, c) = (static_cast<double>(perm[std::size_t(r)]) + rng.uniform()) / static_cast<double>(n);
        }
    }
    return d;
}

double min_distance(const Design &d) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < d.rows(); ++j) best = std::min(best, (d.row(i) - d.row(j)).squaredNorm());
    }
    return std::sqrt(best);
}

Design maximin_lhs(Eigen::Index n, Eigen::Index dim, Rng &rng, int candidates) {
    if (candidates < 1) throw InvalidArgument("maximin_lhs: candidates must be positive");
    Design best = latin_hypercube(n, dim, rng);
    double best_d = min_distance(best);
    for (int k = 1; k < candidates; ++k) {
        Design c = latin_hypercube(n, dim, rng);
        const double dc = min_distance(c);
        if (dc > best_d) {
            best = std::move(c);
            best_d = dc;
        }
    }
    return best;
}

Design equispaced_grid(Eigen::Index per_axis, Eigen::Index dim) {
    if (per_axis < 1 || dim < 1) throw InvalidArgument("equispaced_grid: sizes must be positive");
    Eigen::Index total = 1;
    for (Eigen::Index c = 0; c < dim; ++c) total *= per_axis;
    Design d(total, dim);
    const double denom = static_cast<double>(per_axis - 1);
    for (Eigen::Index r = 0; r < total; ++r) {
        Eigen::Index rem = r;
        for (Eigen::Index c = dim - 1; c >= 0; --c) {
            const Eigen::Index level = rem % per_axis;
            rem /= per_axis;
            d(r, c) = per_axis > 1 ? static_cast<double>(level) / denom : 0.5;
        }
    }
    return d;
}

Design equispaced_design(Eigen::Index n, Eigen::Index dim) {
    if (n < 1 || dim < 1) throw InvalidArgument("equispaced_design: sizes must be positive");
    const auto per_axis = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(std::pow(static_cast<double>(n), 1.0 / static_cast<double>(dim)))));
    return equispaced_grid(per_axis, dim);
}

}  // namespace failcal
