#pragma once

#include "failcal/kernels.hpp"
#include "failcal/rng.hpp"

namespace failcal {

/// Random Latin hypercube in [0, 1]^dim, one point per stratum and column.
Design latin_hypercube(Eigen::Index n, Eigen::Index dim, Rng &rng);

/// Best of `candidates` random Latin hypercubes by minimum pairwise distance.
Design maximin_lhs(Eigen::Index n, Eigen::Index dim, Rng &rng, int candidates = 100);

/// Smallest pairwise Euclidean distance between rows (infinity for fewer than two rows).
double min_distance(const Design &d);

/// Full-factorial grid with `per_axis` equally spaced levels (endpoints included) per dimension.
Design equispaced_grid(Eigen::Index per_axis, Eigen::Index dim);

/// Equispaced design with about `n` points: per-axis count round(n^(1/dim)).
Design equispaced_design(Eigen::Index n, Eigen::Index dim);

}  // namespace failcal
