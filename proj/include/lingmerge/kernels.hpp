#pragma once

// Element-wise merge kernels. Every kernel exists twice: `serial` is the
// plain reference loop, `parallel` is the OpenMP version used by the library.
// Both evaluate each output entry with the same arithmetic in the same order,
// so their results are bitwise identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lingmerge::kernels {

using Inputs = std::span<const std::span<const float>>;

namespace serial {

// out[m x n] = scale * a[m x k] * b[k x n], f64 accumulation.
void matmul(std::span<const float> a, std::span<const float> b, std::span<float> out,
            std::size_t m, std::size_t k, std::size_t n, double scale);

// Zero each entry with probability drop_rate, rescale survivors by 1/(1-drop_rate).
void dare(std::span<const float> in, std::span<float> out, double drop_rate, std::uint64_t key);

void elect_sign(Inputs inputs, std::span<const double> weights, std::span<std::int8_t> signs);

void disjoint_mean(Inputs inputs, std::span<const double> weights,
                   std::span<const std::int8_t> signs, std::span<float> out);

}  // namespace serial

namespace parallel {

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> out,
            std::size_t m, std::size_t k, std::size_t n, double scale);
void dare(std::span<const float> in, std::span<float> out, double drop_rate, std::uint64_t key);
void elect_sign(Inputs inputs, std::span<const double> weights, std::span<std::int8_t> signs);
void disjoint_mean(Inputs inputs, std::span<const double> weights,
                   std::span<const std::int8_t> signs, std::span<float> out);

}  // namespace parallel

// Indices of the k largest-magnitude entries; ties at the boundary go to the
// lower flat index. Result is sorted ascending.
std::vector<std::size_t> top_k_indices(std::span<const float> values, std::size_t k);

}  // namespace lingmerge::kernels
