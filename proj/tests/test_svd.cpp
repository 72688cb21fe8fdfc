#include <random>

#include <Eigen/SVD>

#include "doctest.h"
#include "lingmerge/error.hpp"
#include "lingmerge/svd.hpp"

using namespace lingmerge;

namespace {

std::vector<double> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<double> d(-1, 1);
    std::vector<double> a(rows * cols);
    for (auto& x : a) x = d(rng);
    return a;
}

double reconstruction_error(const ThinSvd& s, const std::vector<double>& a) {
    double worst = 0.0;
    for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t c = 0; c < s.cols; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < s.k; ++j) acc += s.u[r * s.k + j] * s.svt[j * s.cols + c];
            worst = std::max(worst, std::fabs(acc - a[r * s.cols + c]));
        }
    }
    return worst;
}

double orthonormality_error(const ThinSvd& s) {
    double worst = 0.0;
    for (std::size_t i = 0; i < s.k; ++i) {
        for (std::size_t j = 0; j < s.k; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < s.rows; ++r) acc += s.u[r * s.k + i] * s.u[r * s.k + j];
            worst = std::max(worst, std::fabs(acc - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

void check_against_eigen(const ThinSvd& s, const std::vector<double>& a) {
    Eigen::MatrixXd m(s.rows, s.cols);
    for (std::size_t r = 0; r < s.rows; ++r)
        for (std::size_t c = 0; c < s.cols; ++c) m(r, c) = a[r * s.cols + c];
    Eigen::JacobiSVD<Eigen::MatrixXd> ref(m);
    const auto& sv = ref.singularValues();
    REQUIRE(static_cast<std::size_t>(sv.size()) == s.k);
    for (std::size_t j = 0; j < s.k; ++j) CHECK(s.s[j] == doctest::Approx(sv(j)).epsilon(1e-9).scale(sv(0)));
}

}  // namespace

TEST_CASE("thin SVD on random matrices, both orientations") {
    std::mt19937_64 rng(17);
    for (auto [rows, cols] : {std::pair{6, 12}, {12, 6}, {1, 7}, {7, 1}, {5, 5}, {64, 96}, {64, 48}, {30, 240}}) {
        const auto a = random_matrix(rng, rows, cols);
        const auto s = thin_svd(a, rows, cols);
        CHECK(s.k == static_cast<std::size_t>(std::min(rows, cols)));
        CHECK(reconstruction_error(s, a) < 1e-10);
        CHECK(orthonormality_error(s) < 1e-10);
        CHECK(std::is_sorted(s.s.rbegin(), s.s.rend()));
        check_against_eigen(s, a);
    }
}

TEST_CASE("rank-deficient inputs still give an orthonormal U") {
    std::mt19937_64 rng(23);
    for (auto [rows, cols] : {std::pair{10, 4}, {4, 10}, {16, 8}}) {
        // [X | X] style duplication: rank at most cols / 2.
        auto a = random_matrix(rng, rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = cols / 2; c < cols; ++c) a[r * cols + c] = a[r * cols + c - cols / 2];
        const auto s = thin_svd(a, rows, cols);
        CHECK(reconstruction_error(s, a) < 1e-10);
        CHECK(orthonormality_error(s) < 1e-10);
        check_against_eigen(s, a);
    }
    SUBCASE("zero matrix") {
        const std::vector<double> z(12, 0.0);
        const auto s = thin_svd(z, 4, 3);
        CHECK(orthonormality_error(s) < 1e-12);
        for (double x : s.s) CHECK(x == 0.0);
    }
}

TEST_CASE("non-convergence is a numerical error") {
    std::mt19937_64 rng(1);
    const auto a = random_matrix(rng, 20, 20);
    SvdOptions opts;
    opts.max_sweeps = 1;
    try {
        thin_svd(a, 20, 20, opts);
        FAIL("expected non-convergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kNumerical);
    }
}
