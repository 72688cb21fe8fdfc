#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "lingmerge/tensor.hpp"

namespace lingmerge {

enum class Method { kDare, kKnots, kTies };

std::string_view method_name(Method m);

struct MergeConfig {
    std::vector<Method> pipeline{Method::kTies};
    double density = 1.0;
    // Defaults to 1 - density when unset.
    std::optional<double> drop_rate;
    // Empty means one equal weight per input.
    std::vector<double> weights;
    std::uint64_t seed = 0;

    double effective_drop_rate() const;
    std::vector<double> resolved_weights(std::size_t n_inputs) const;
    bool uses(Method m) const;

    // Throws kParameter on an unsupported pipeline or out-of-range knob.
    void validate() const;
    void validate(std::size_t n_inputs) const;

    // e.g. "DARE-TIES(d=0.5,p=0.5,seed=42)"
    std::string summary() const;

    static MergeConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SignTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<std::int8_t> data;  // each entry in {-1, 0, +1}
};

using SignMap = std::map<std::string, SignTensor>;

// Keeps the ceil(density * n) largest-magnitude entries of each tensor.
TensorBlock trim(const TensorBlock& t, double density);
DeltaMap trim(const DeltaMap& delta, double density);

// Drop-and-rescale. The random stream of each tensor is keyed by
// (seed, delta.label, tensor name), so models with distinct labels draw
// independently.
DeltaMap dare_prune(const DeltaMap& delta, double drop_rate, std::uint64_t seed);

SignMap elect_sign(std::span<const DeltaMap> trimmed, std::span<const double> weights);
DeltaMap disjoint_merge(std::span<const DeltaMap> trimmed, const SignMap& signs, std::span<const double> weights);

// Trim, elect sign, disjoint mean.
DeltaMap ties_merge(std::span<const DeltaMap> deltas, const MergeConfig& config);

struct KnotsLayer {
    TensorBlock u;                       // [d_out, k]
    std::vector<double> singular_values;  // k, descending
    std::vector<TensorBlock> v_parts;     // M blocks of diag(S) * V_m^T, each [k, d_in]
};

// Per layer, SVD of the horizontal concatenation [dW_1 | ... | dW_M].
std::map<std::string, KnotsLayer> knots_transform(std::span<const DeltaMap> deltas);

// TIES over the aligned v_parts, then reconstruct U * merged.
DeltaMap knots_merge(std::span<const DeltaMap> deltas, const MergeConfig& config);

// Dispatches on config.pipeline; output is labeled with config.summary().
DeltaMap merge(std::span<const DeltaMap> deltas, const MergeConfig& config);

}  // namespace lingmerge

namespace lingmerge {

// Rank-R factorization of each merged layer via truncated SVD, split as
// B = U_R sqrt(S_R), A = sqrt(S_R) V_R^T, with alpha = rank so the scale is 1.
LoraAdapter refactor_rank(const DeltaMap& delta, std::uint32_t rank);

}  // namespace lingmerge
