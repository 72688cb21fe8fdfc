#include "lingmerge/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "lingmerge/error.hpp"
#include "lingmerge/kernels.hpp"

namespace lingmerge {

std::size_t shape_product(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

TensorBlock::TensorBlock(std::string name, std::vector<std::size_t> shape, std::vector<float> data)
    : name_(std::move(name)), shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw Error(ErrorCode::kValidation, "tensor '" + name_ + "' has no dimensions");
    for (std::size_t d : shape_) {
        if (d == 0) throw Error(ErrorCode::kValidation, "tensor '" + name_ + "' has a zero dimension");
    }
    if (shape_product(shape_) != data_.size()) {
        throw Error(ErrorCode::kValidation, "tensor '" + name_ + "' shape " + shape_to_string(shape_) +
                                                " does not match payload length " + std::to_string(data_.size()));
    }
}

TensorBlock::TensorBlock(std::string name, std::vector<std::size_t> shape)
    : TensorBlock(std::move(name), shape, std::vector<float>(shape_product(shape), 0.0f)) {}

std::size_t TensorBlock::cols() const noexcept {
    if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
    return shape_product(std::span(shape_).subspan(1));
}

bool TensorBlock::all_finite() const noexcept {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool same_bits(const TensorBlock& a, const TensorBlock& b) {
    return a.name() == b.name() && a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

void LoraAdapter::validate() const {
    if (rank == 0) throw Error(ErrorCode::kValidation, "adapter rank must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::kValidation, "adapter alpha must be positive");
    if (layers.empty()) throw Error(ErrorCode::kValidation, "adapter has no layers");
    for (const auto& [name, layer] : layers) {
        if (layer.a.shape().size() != 2 || layer.b.shape().size() != 2) {
            throw Error(ErrorCode::kValidation, "layer '" + name + "' factors must be 2-D");
        }
        if (layer.a.shape()[0] != rank || layer.b.shape()[1] != rank) {
            throw Error(ErrorCode::kValidation, "layer '" + name + "' factors " + shape_to_string(layer.a.shape()) +
                                                    " / " + shape_to_string(layer.b.shape()) +
                                                    " disagree with rank " + std::to_string(rank));
        }
    }
}

void DeltaMap::validate() const {
    if (layers.empty()) throw Error(ErrorCode::kValidation, "delta has no layers");
    for (const auto& [name, t] : layers) {
        if (t.shape().size() != 2) throw Error(ErrorCode::kValidation, "delta layer '" + name + "' must be 2-D");
    }
}

void check_alignment(std::span<const DeltaMap> deltas) {
    if (deltas.empty()) return;
    const auto& ref = deltas.front().layers;
    for (std::size_t m = 1; m < deltas.size(); ++m) {
        const auto& other = deltas[m].layers;
        if (other.size() != ref.size()) {
            throw Error(ErrorCode::kAlignment, "input " + std::to_string(m) + " has a different layer count");
        }
        for (auto it = ref.begin(), jt = other.begin(); it != ref.end(); ++it, ++jt) {
            if (it->first != jt->first) {
                throw Error(ErrorCode::kAlignment, "input " + std::to_string(m) + " has layer '" + jt->first +
                                                       "' where '" + it->first + "' was expected");
            }
            if (it->second.shape() != jt->second.shape()) {
                throw Error(ErrorCode::kAlignment, "layer '" + it->first + "' shape " +
                                                       shape_to_string(jt->second.shape()) + " in input " +
                                                       std::to_string(m) + " vs " +
                                                       shape_to_string(it->second.shape()));
            }
        }
    }
}

DeltaMap compute_delta(const LoraAdapter& adapter) {
    adapter.validate();
    const double scale = adapter.alpha / static_cast<double>(adapter.rank);
    DeltaMap out;
    out.label = adapter.label;
    for (const auto& [name, layer] : adapter.layers) {
        const std::size_t d_out = layer.b.shape()[0];
        const std::size_t d_in = layer.a.shape()[1];
        TensorBlock dw(name, {d_out, d_in});
        kernels::parallel::matmul(layer.b.data(), layer.a.data(), dw.data(), d_out, adapter.rank, d_in, scale);
        out.layers.emplace(name, std::move(dw));
    }
    return out;
}

}  // namespace lingmerge
