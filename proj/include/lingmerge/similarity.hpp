#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lingmerge/tensor.hpp"

namespace lingmerge {

struct SimilarityMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> values;  // square, symmetric, unit diagonal
};

// All layers concatenated in lexicographic layer-name order, row-major.
std::vector<float> flatten(const DeltaMap& delta);

// Throws kUndefinedSimilarity for a zero vector, kAlignment on length mismatch.
double cosine(std::span<const float> u, std::span<const float> v);

enum class SimilarityMode {
    kFlattened,      // cosine of the fully flattened vectors
    kLayerAveraged,  // mean of per-layer cosines
};

SimilarityMatrix similarity_matrix(std::span<const DeltaMap> deltas,
                                   SimilarityMode mode = SimilarityMode::kFlattened);

// Header row "",label...; then one label-prefixed row each, fixed 6 decimals.
void write_similarity_csv(std::ostream& os, const SimilarityMatrix& m);

}  // namespace lingmerge
