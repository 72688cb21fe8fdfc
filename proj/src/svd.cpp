#include "lingmerge/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lingmerge/error.hpp"

namespace lingmerge {

namespace {

using Column = std::vector<double>;

double dot(const Column& x, const Column& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

void rotate(Column& x, Column& y, double c, double s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Orthogonalizes the columns of g in place, accumulating rotations into v
// (initially identity).
void hestenes(std::vector<Column>& g, std::vector<Column>& v, double negligible, const SvdOptions& opts) {
    const std::size_t n = g.size();
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = dot(g[i], g[i]);
                const double beta = dot(g[j], g[j]);
                if (alpha <= negligible || beta <= negligible) continue;
                const double gamma = dot(g[i], g[j]);
                if (std::fabs(gamma) <= opts.tolerance * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(g[i], g[j], c, s);
                rotate(v[i], v[j], c, s);
            }
        }
        if (!rotated) return;
    }
    throw Error(ErrorCode::kNumerical, "Jacobi SVD did not converge in " + std::to_string(opts.max_sweeps) + " sweeps");
}

// Replaces columns flagged in `deficient` with unit vectors orthogonal to all
// other columns.
void complete_basis(std::vector<Column>& u, const std::vector<bool>& deficient) {
    const std::size_t len = u.empty() ? 0 : u.front().size();
    std::vector<std::size_t> accepted;
    for (std::size_t j = 0; j < u.size(); ++j) {
        if (!deficient[j]) accepted.push_back(j);
    }
    std::size_t next_axis = 0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        if (!deficient[j]) continue;
        for (; next_axis < len; ++next_axis) {
            Column cand(len, 0.0);
            cand[next_axis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t a : accepted) {
                    const double proj = dot(cand, u[a]);
                    for (std::size_t r = 0; r < len; ++r) cand[r] -= proj * u[a][r];
                }
            }
            const double norm = std::sqrt(dot(cand, cand));
            if (norm > 0.5) {
                for (double& x : cand) x /= norm;
                u[j] = std::move(cand);
                accepted.push_back(j);
                ++next_axis;
                break;
            }
        }
    }
}

}  // namespace

ThinSvd thin_svd(std::span<const double> a, std::size_t rows, std::size_t cols, const SvdOptions& opts) {
    if (rows == 0 || cols == 0 || a.size() != rows * cols) {
        throw Error(ErrorCode::kParameter, "thin_svd: matrix dimensions do not match data");
    }
    const bool transposed = rows < cols;
    const std::size_t k = std::min(rows, cols);
    const std::size_t len = transposed ? cols : rows;

    // g holds the k columns being orthogonalized: columns of A, or of A^T.
    std::vector<Column> g(k, Column(len));
    double frob = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = a[r * cols + c];
            frob += x * x;
            if (transposed) g[r][c] = x;
            else g[c][r] = x;
        }
    }
    std::vector<Column> v(k, Column(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) v[i][i] = 1.0;

    const double negligible = frob * 1e-30;
    hestenes(g, v, negligible, opts);

    std::vector<double> sigma(k);
    for (std::size_t j = 0; j < k; ++j) sigma[j] = std::sqrt(dot(g[j], g[j]));
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    ThinSvd out;
    out.rows = rows;
    out.cols = cols;
    out.k = k;
    out.s.resize(k);
    out.u.assign(rows * k, 0.0);
    out.svt.assign(k * cols, 0.0);

    if (transposed) {
        // A^T V = W  =>  A = V W^T: U = V, diag(S) V^T = W^T.
        for (std::size_t jj = 0; jj < k; ++jj) {
            const std::size_t j = order[jj];
            out.s[jj] = sigma[j];
            for (std::size_t r = 0; r < rows; ++r) out.u[r * k + jj] = v[j][r];
            for (std::size_t c = 0; c < cols; ++c) out.svt[jj * cols + c] = g[j][c];
        }
        return out;
    }

    // A V = W  =>  A = (W / S) diag(S) V^T.
    const double smax = k ? sigma[order[0]] : 0.0;
    std::vector<Column> u(k);
    std::vector<bool> deficient(k, false);
    for (std::size_t jj = 0; jj < k; ++jj) {
        const std::size_t j = order[jj];
        out.s[jj] = sigma[j];
        for (std::size_t c = 0; c < cols; ++c) out.svt[jj * cols + c] = sigma[j] * v[j][c];
        if (sigma[j] <= smax * 1e-12 || sigma[j] == 0.0) {
            deficient[jj] = true;
            u[jj] = Column(rows, 0.0);
        } else {
            u[jj] = g[j];
            for (double& x : u[jj]) x /= sigma[j];
        }
    }
    complete_basis(u, deficient);
    for (std::size_t jj = 0; jj < k; ++jj) {
        for (std::size_t r = 0; r < rows; ++r) out.u[r * k + jj] = u[jj][r];
    }
    return out;
}

}  // namespace lingmerge
