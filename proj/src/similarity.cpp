#include "lingmerge/similarity.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <exception>

#include "lingmerge/error.hpp"

namespace lingmerge {

std::vector<float> flatten(const DeltaMap& delta) {
    std::vector<float> out;
    std::size_t total = 0;
    for (const auto& [name, t] : delta.layers) total += t.size();
    out.reserve(total);
    // std::map iterates in lexicographic key order.
    for (const auto& [name, t] : delta.layers) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

double cosine(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) throw Error(ErrorCode::kAlignment, "cosine of vectors with different lengths");
    double uv = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i];
        const double b = v[i];
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::kUndefinedSimilarity, "cosine similarity with a zero vector");
    return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

SimilarityMatrix similarity_matrix(std::span<const DeltaMap> deltas, SimilarityMode mode) {
    if (deltas.size() < 2) throw Error(ErrorCode::kParameter, "similarity needs at least 2 inputs");
    check_alignment(deltas);

    const std::size_t n = deltas.size();
    SimilarityMatrix out;
    for (const auto& d : deltas) out.labels.push_back(d.label);
    out.values.assign(n, std::vector<double>(n, 0.0));

    std::vector<std::vector<float>> flat;
    if (mode == SimilarityMode::kFlattened) {
        for (const auto& d : deltas) flat.push_back(flatten(d));
    }
    auto pair_cosine = [&](std::size_t i, std::size_t j) {
        if (mode == SimilarityMode::kFlattened) return cosine(flat[i], flat[j]);
        double sum = 0.0;
        for (const auto& [name, t] : deltas[i].layers) sum += cosine(t.data(), deltas[j].layers.at(name).data());
        return sum / static_cast<double>(deltas[i].layers.size());
    };

    // Upper triangle including the diagonal, so zero vectors are reported.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) pairs.emplace_back(i, j);
    }
    std::vector<std::exception_ptr> failures(pairs.size());
    #pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(pairs.size()); ++p) {
        const auto [i, j] = pairs[static_cast<std::size_t>(p)];
        try {
            const double c = pair_cosine(i, j);
            out.values[i][j] = c;
            out.values[j][i] = c;
        } catch (...) {
            failures[static_cast<std::size_t>(p)] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
    return out;
}

void write_similarity_csv(std::ostream& os, const SimilarityMatrix& m) {
    for (const auto& l : m.labels) os << ',' << l;
    os << '\n';
    char buf[32];
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        os << m.labels[i];
        for (double v : m.values[i]) {
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace lingmerge
