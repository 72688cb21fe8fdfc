#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lingmerge {

// Named, shaped, row-major f32 array. Shape and payload length are checked on
// construction; finiteness is checked by the loaders.
class TensorBlock {
public:
    TensorBlock() = default;
    TensorBlock(std::string name, std::vector<std::size_t> shape, std::vector<float> data);
    // Zero-filled tensor.
    TensorBlock(std::string name, std::vector<std::size_t> shape);

    const std::string& name() const noexcept { return name_; }
    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
    // Product of all trailing dimensions; the column count of a 2-D tensor.
    std::size_t cols() const noexcept;

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }
    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    void rename(std::string name) { name_ = std::move(name); }
    bool all_finite() const noexcept;

    friend bool operator==(const TensorBlock&, const TensorBlock&) = default;

private:
    std::string name_;
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);
// Bitwise comparison of payloads; distinguishes -0.0f from 0.0f.
bool same_bits(const TensorBlock& a, const TensorBlock& b);

struct LoraLayer {
    TensorBlock a;  // [r, d_in]
    TensorBlock b;  // [d_out, r]

    friend bool operator==(const LoraLayer&, const LoraLayer&) = default;
};

struct LoraAdapter {
    std::map<std::string, LoraLayer> layers;
    std::uint32_t rank = 0;
    double alpha = 0.0;
    std::string label;

    // Throws kValidation if any layer disagrees with rank or is not 2-D.
    void validate() const;

    friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

// Full-rank per-layer update, one "language vector" per fine-tuned adapter.
struct DeltaMap {
    std::map<std::string, TensorBlock> layers;
    std::string label;

    void validate() const;

    friend bool operator==(const DeltaMap&, const DeltaMap&) = default;
};

// Throws kAlignment unless every map has the same layer names and shapes.
void check_alignment(std::span<const DeltaMap> deltas);

// dW = (alpha / r) * B * A per layer, accumulated in f64.
DeltaMap compute_delta(const LoraAdapter& adapter);

}  // namespace lingmerge
