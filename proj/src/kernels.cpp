#include "lingmerge/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lingmerge/rng.hpp"

namespace lingmerge::kernels {

namespace {

inline void matmul_row(std::span<const float> a, std::span<const float> b, std::span<float> out,
                       std::size_t i, std::size_t k, std::size_t n, double scale,
                       std::vector<double>& acc) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t l = 0; l < k; ++l) {
        const double ail = a[i * k + l];
        if (ail == 0.0) continue;
        const float* brow = b.data() + l * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += ail * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<float>(scale * acc[j]);
}

inline float dare_entry(float v, double drop_rate, double keep_scale, std::uint64_t key, std::size_t i) {
    if (rng::uniform(key, i) < drop_rate) return 0.0f;
    return static_cast<float>(static_cast<double>(v) * keep_scale);
}

inline std::int8_t elect_entry(Inputs inputs, std::span<const double> weights, std::size_t i) {
    double sum = 0.0;
    for (std::size_t m = 0; m < inputs.size(); ++m) sum += weights[m] * static_cast<double>(inputs[m][i]);
    return static_cast<std::int8_t>((sum > 0.0) - (sum < 0.0));
}

inline float disjoint_entry(Inputs inputs, std::span<const double> weights, std::int8_t sign,
                            std::size_t i) {
    if (sign == 0) return 0.0f;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t m = 0; m < inputs.size(); ++m) {
        const float v = inputs[m][i];
        if ((sign > 0 && v > 0.0f) || (sign < 0 && v < 0.0f)) {
            num += weights[m] * static_cast<double>(v);
            den += weights[m];
        }
    }
    return den > 0.0 ? static_cast<float>(num / den) : 0.0f;
}

}  // namespace

namespace serial {

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> out,
            std::size_t m, std::size_t k, std::size_t n, double scale) {
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, out, i, k, n, scale, acc);
}

void dare(std::span<const float> in, std::span<float> out, double drop_rate, std::uint64_t key) {
    const double keep_scale = 1.0 / (1.0 - drop_rate);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = dare_entry(in[i], drop_rate, keep_scale, key, i);
}

void elect_sign(Inputs inputs, std::span<const double> weights, std::span<std::int8_t> signs) {
    for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = elect_entry(inputs, weights, i);
}

void disjoint_mean(Inputs inputs, std::span<const double> weights,
                   std::span<const std::int8_t> signs, std::span<float> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = disjoint_entry(inputs, weights, signs[i], i);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> out,
            std::size_t m, std::size_t k, std::size_t n, double scale) {
    #pragma omp parallel
    {
        std::vector<double> acc(n);
        #pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
            matmul_row(a, b, out, static_cast<std::size_t>(i), k, n, scale, acc);
    }
}

void dare(std::span<const float> in, std::span<float> out, double drop_rate, std::uint64_t key) {
    const double keep_scale = 1.0 / (1.0 - drop_rate);
    const auto n = static_cast<std::ptrdiff_t>(in.size());
    #pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = dare_entry(in[i], drop_rate, keep_scale, key, static_cast<std::size_t>(i));
}

void elect_sign(Inputs inputs, std::span<const double> weights, std::span<std::int8_t> signs) {
    const auto n = static_cast<std::ptrdiff_t>(signs.size());
    #pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) signs[i] = elect_entry(inputs, weights, static_cast<std::size_t>(i));
}

void disjoint_mean(Inputs inputs, std::span<const double> weights,
                   std::span<const std::int8_t> signs, std::span<float> out) {
    const auto n = static_cast<std::ptrdiff_t>(out.size());
    #pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = disjoint_entry(inputs, weights, signs[i], static_cast<std::size_t>(i));
}

}  // namespace parallel

std::vector<std::size_t> top_k_indices(std::span<const float> values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    // Strict total order: magnitude descending, then index ascending.
    auto before = [&](std::size_t x, std::size_t y) {
        const float ax = std::fabs(values[x]);
        const float ay = std::fabs(values[y]);
        return ax > ay || (ax == ay && x < y);
    };
    if (k < idx.size()) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace lingmerge::kernels
