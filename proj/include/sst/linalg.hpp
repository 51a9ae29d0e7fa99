#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sst/common.hpp"

namespace sst {

struct SymmetricEigen {
  // Ascending.
  std::vector<double> values;
  // Column k is the unit eigenvector of values[k].
  Matrix vectors;
  std::size_t sweeps = 0;
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
// `tolerance`. Equal eigenvalues keep their diagonal order.
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-10, std::size_t max_sweeps = 100);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  double inertia = 0.0;
};

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 100;
};

// Lloyd's algorithm from k-means++ seeds; the lowest-inertia restart wins
// (earliest on ties). k is capped at the number of points.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {});

}  // namespace sst
