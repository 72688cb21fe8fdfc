#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lingmerge {

struct SvdOptions {
    double tolerance = 1e-10;  // max |cos| between any two columns at convergence
    int max_sweeps = 100;
};

// Thin SVD A = U * diag(S) * V^T of a row-major rows x cols matrix, with
// k = min(rows, cols). `svt` holds diag(S) * V^T directly, which one-sided
// Jacobi produces without dividing by possibly-zero singular values.
struct ThinSvd {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t k = 0;
    std::vector<double> u;    // rows x k, orthonormal columns
    std::vector<double> s;    // k, descending
    std::vector<double> svt;  // k x cols
};

// One-sided (Hestenes) Jacobi. Works on A when rows >= cols and on A^T
// otherwise, so the rotated dimension is always min(rows, cols).
// Throws kNumerical if the sweep cap is hit.
ThinSvd thin_svd(std::span<const double> a, std::size_t rows, std::size_t cols, const SvdOptions& opts = {});

}  // namespace lingmerge
