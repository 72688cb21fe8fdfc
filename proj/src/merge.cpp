#include "lingmerge/merge.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>

#include "lingmerge/error.hpp"
#include "lingmerge/kernels.hpp"
#include "lingmerge/rng.hpp"
#include "lingmerge/svd.hpp"

namespace lingmerge {

namespace {

std::string fmt_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

Method parse_method(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    if (s == "DARE") return Method::kDare;
    if (s == "KNOTS") return Method::kKnots;
    if (s == "TIES") return Method::kTies;
    throw Error(ErrorCode::kParameter, "unknown merge method '" + s + "'");
}

void check_density(double density) {
    if (!(density > 0.0 && density <= 1.0)) {
        throw Error(ErrorCode::kParameter, "density must lie in (0, 1], got " + fmt_number(density));
    }
}

void check_drop_rate(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorCode::kParameter, "drop rate must lie in [0, 1), got " + fmt_number(p));
}

void check_weights(std::span<const DeltaMap> deltas, std::span<const double> weights) {
    if (deltas.empty()) throw Error(ErrorCode::kParameter, "no inputs to merge");
    if (weights.size() != deltas.size()) {
        throw Error(ErrorCode::kParameter, std::to_string(weights.size()) + " weights for " +
                                               std::to_string(deltas.size()) + " inputs");
    }
    check_alignment(deltas);
}

std::vector<std::span<const float>> layer_views(std::span<const DeltaMap> deltas, const std::string& layer) {
    std::vector<std::span<const float>> views;
    views.reserve(deltas.size());
    for (const auto& d : deltas) views.push_back(d.layers.at(layer).data());
    return views;
}

std::vector<std::string> layer_names(const DeltaMap& d) {
    std::vector<std::string> names;
    for (const auto& [name, t] : d.layers) names.push_back(name);
    return names;
}

}  // namespace

std::string_view method_name(Method m) {
    switch (m) {
        case Method::kDare: return "DARE";
        case Method::kKnots: return "KNOTS";
        case Method::kTies: return "TIES";
    }
    return "?";
}

double MergeConfig::effective_drop_rate() const { return drop_rate.value_or(1.0 - density); }

std::vector<double> MergeConfig::resolved_weights(std::size_t n_inputs) const {
    if (weights.empty()) return std::vector<double>(n_inputs, 1.0);
    return weights;
}

bool MergeConfig::uses(Method m) const { return std::find(pipeline.begin(), pipeline.end(), m) != pipeline.end(); }

void MergeConfig::validate() const {
    using enum Method;
    const bool known = pipeline == std::vector{kTies} || pipeline == std::vector{kKnots, kTies} ||
                       pipeline == std::vector{kDare, kTies} || pipeline == std::vector{kDare, kKnots, kTies};
    if (!known) {
        std::string name;
        for (auto m : pipeline) name += (name.empty() ? "" : "-") + std::string(method_name(m));
        throw Error(ErrorCode::kParameter, "unsupported pipeline '" + name +
                                               "'; expected TIES, KNOTS-TIES, DARE-TIES or DARE-KNOTS-TIES");
    }
    check_density(density);
    if (drop_rate) check_drop_rate(*drop_rate);
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::kParameter, "weights must be positive");
    }
}

void MergeConfig::validate(std::size_t n_inputs) const {
    validate();
    if (n_inputs == 0) throw Error(ErrorCode::kParameter, "no inputs to merge");
    if (!weights.empty() && weights.size() != n_inputs) {
        throw Error(ErrorCode::kParameter, std::to_string(weights.size()) + " weights for " +
                                               std::to_string(n_inputs) + " inputs");
    }
    if (uses(Method::kKnots) && n_inputs < 2) {
        throw Error(ErrorCode::kParameter, "KnOTS alignment needs at least 2 inputs");
    }
}

std::string MergeConfig::summary() const {
    std::string s;
    for (auto m : pipeline) s += (s.empty() ? "" : "-") + std::string(method_name(m));
    s += "(d=" + fmt_number(density);
    if (uses(Method::kDare)) s += ",p=" + fmt_number(effective_drop_rate()) + ",seed=" + std::to_string(seed);
    return s + ")";
}

MergeConfig MergeConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::kParameter, "merge config must be a JSON object");
    MergeConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "pipeline") {
                if (!value.is_array()) throw Error(ErrorCode::kParameter, "pipeline must be an array of method names");
                cfg.pipeline.clear();
                for (const auto& m : value) cfg.pipeline.push_back(parse_method(m.get<std::string>()));
            } else if (key == "density") {
                cfg.density = value.get<double>();
            } else if (key == "drop_rate") {
                if (!value.is_null()) cfg.drop_rate = value.get<double>();
            } else if (key == "weights") {
                // A bare number means "this weight for every model".
                if (value.is_number()) {
                    if (!(value.get<double>() > 0.0)) throw Error(ErrorCode::kParameter, "weights must be positive");
                } else {
                    cfg.weights = value.get<std::vector<double>>();
                }
            } else if (key == "seed") {
                cfg.seed = value.get<std::uint64_t>();
            } else {
                throw Error(ErrorCode::kParameter, "unknown merge config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParameter, std::string("bad merge config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json MergeConfig::to_json() const {
    nlohmann::json j;
    j["pipeline"] = nlohmann::json::array();
    for (auto m : pipeline) j["pipeline"].push_back(std::string(method_name(m)));
    j["density"] = density;
    if (uses(Method::kDare)) j["drop_rate"] = effective_drop_rate();
    if (!weights.empty()) j["weights"] = weights;
    j["seed"] = seed;
    return j;
}

TensorBlock trim(const TensorBlock& t, double density) {
    check_density(density);
    const std::size_t n = t.size();
    auto k = static_cast<std::size_t>(std::ceil(density * static_cast<double>(n) * (1.0 - 1e-12)));
    k = std::clamp<std::size_t>(k, 1, n);
    if (k == n) return t;
    TensorBlock out(t.name(), t.shape());
    for (std::size_t i : kernels::top_k_indices(t.data(), k)) out[i] = t[i];
    return out;
}

DeltaMap trim(const DeltaMap& delta, double density) {
    check_density(density);
    DeltaMap out;
    out.label = delta.label;
    for (const auto& [name, t] : delta.layers) out.layers.emplace(name, trim(t, density));
    return out;
}

DeltaMap dare_prune(const DeltaMap& delta, double drop_rate, std::uint64_t seed) {
    check_drop_rate(drop_rate);
    if (drop_rate == 0.0) return delta;
    DeltaMap out;
    out.label = delta.label;
    for (const auto& [name, t] : delta.layers) {
        TensorBlock pruned(t.name(), t.shape());
        kernels::parallel::dare(t.data(), pruned.data(), drop_rate, rng::stream_key(seed, delta.label, name));
        out.layers.emplace(name, std::move(pruned));
    }
    return out;
}

SignMap elect_sign(std::span<const DeltaMap> trimmed, std::span<const double> weights) {
    check_weights(trimmed, weights);
    SignMap signs;
    for (const auto& [name, t] : trimmed.front().layers) {
        SignTensor st{name, t.shape(), std::vector<std::int8_t>(t.size())};
        const auto views = layer_views(trimmed, name);
        kernels::parallel::elect_sign(views, weights, st.data);
        signs.emplace(name, std::move(st));
    }
    return signs;
}

DeltaMap disjoint_merge(std::span<const DeltaMap> trimmed, const SignMap& signs, std::span<const double> weights) {
    check_weights(trimmed, weights);
    DeltaMap out;
    out.label = "merged";
    for (const auto& [name, t] : trimmed.front().layers) {
        auto it = signs.find(name);
        if (it == signs.end() || it->second.shape != t.shape()) {
            throw Error(ErrorCode::kAlignment, "sign tensor for layer '" + name + "' is missing or misshapen");
        }
        TensorBlock merged(t.name(), t.shape());
        const auto views = layer_views(trimmed, name);
        kernels::parallel::disjoint_mean(views, weights, it->second.data, merged.data());
        out.layers.emplace(name, std::move(merged));
    }
    return out;
}

DeltaMap ties_merge(std::span<const DeltaMap> deltas, const MergeConfig& config) {
    if (deltas.empty()) throw Error(ErrorCode::kParameter, "ties_merge needs at least one input");
    check_density(config.density);
    const auto weights = config.resolved_weights(deltas.size());
    check_weights(deltas, weights);

    std::vector<DeltaMap> trimmed;
    trimmed.reserve(deltas.size());
    for (const auto& d : deltas) trimmed.push_back(trim(d, config.density));
    const auto signs = elect_sign(trimmed, weights);
    return disjoint_merge(trimmed, signs, weights);
}

std::map<std::string, KnotsLayer> knots_transform(std::span<const DeltaMap> deltas) {
    if (deltas.size() < 2) throw Error(ErrorCode::kParameter, "KnOTS alignment needs at least 2 inputs");
    check_alignment(deltas);
    for (const auto& d : deltas) d.validate();

    const auto names = layer_names(deltas.front());
    const std::size_t n_models = deltas.size();
    std::vector<KnotsLayer> results(names.size());
    std::vector<std::exception_ptr> failures(names.size());

    #pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t li = 0; li < static_cast<std::ptrdiff_t>(names.size()); ++li) {
        const auto idx = static_cast<std::size_t>(li);
        try {
            const std::string& name = names[idx];
            const auto& shape = deltas.front().layers.at(name).shape();
            const std::size_t d_out = shape[0];
            const std::size_t d_in = shape[1];
            const std::size_t width = n_models * d_in;

            std::vector<double> concat(d_out * width);
            for (std::size_t m = 0; m < n_models; ++m) {
                const auto src = deltas[m].layers.at(name).data();
                for (std::size_t r = 0; r < d_out; ++r) {
                    for (std::size_t c = 0; c < d_in; ++c) concat[r * width + m * d_in + c] = src[r * d_in + c];
                }
            }
            const ThinSvd svd = thin_svd(concat, d_out, width);

            KnotsLayer layer;
            layer.u = TensorBlock(name, {d_out, svd.k});
            for (std::size_t i = 0; i < svd.u.size(); ++i) layer.u[i] = static_cast<float>(svd.u[i]);
            layer.singular_values = svd.s;
            for (std::size_t m = 0; m < n_models; ++m) {
                TensorBlock part(name, {svd.k, d_in});
                for (std::size_t r = 0; r < svd.k; ++r) {
                    for (std::size_t c = 0; c < d_in; ++c)
                        part[r * d_in + c] = static_cast<float>(svd.svt[r * width + m * d_in + c]);
                }
                layer.v_parts.push_back(std::move(part));
            }
            results[idx] = std::move(layer);
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    std::map<std::string, KnotsLayer> out;
    for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], std::move(results[i]));
    return out;
}

DeltaMap knots_merge(std::span<const DeltaMap> deltas, const MergeConfig& config) {
    config.validate(deltas.size());
    const auto aligned = knots_transform(deltas);

    MergeConfig inner = config;
    inner.pipeline = {Method::kTies};

    DeltaMap out;
    out.label = "merged";
    for (const auto& [name, layer] : aligned) {
        std::vector<DeltaMap> parts(layer.v_parts.size());
        for (std::size_t m = 0; m < parts.size(); ++m) {
            parts[m].label = deltas[m].label;
            parts[m].layers.emplace(name, layer.v_parts[m]);
        }
        const DeltaMap merged = ties_merge(parts, inner);
        const TensorBlock& r = merged.layers.at(name);

        const std::size_t d_out = layer.u.shape()[0];
        const std::size_t k = layer.u.shape()[1];
        const std::size_t d_in = r.shape()[1];
        TensorBlock dw(name, {d_out, d_in});
        kernels::parallel::matmul(layer.u.data(), r.data(), dw.data(), d_out, k, d_in, 1.0);
        out.layers.emplace(name, std::move(dw));
    }
    return out;
}

DeltaMap merge(std::span<const DeltaMap> deltas, const MergeConfig& config) {
    config.validate(deltas.size());

    std::vector<DeltaMap> pruned;
    std::span<const DeltaMap> inputs = deltas;
    if (config.uses(Method::kDare)) {
        const double p = config.effective_drop_rate();
        pruned.reserve(deltas.size());
        for (const auto& d : deltas) pruned.push_back(dare_prune(d, p, config.seed));
        inputs = pruned;
    }

    DeltaMap out = config.uses(Method::kKnots) ? knots_merge(inputs, config) : ties_merge(inputs, config);
    out.label = config.summary();
    return out;
}

}  // namespace lingmerge

namespace lingmerge {

LoraAdapter refactor_rank(const DeltaMap& delta, std::uint32_t rank) {
    delta.validate();
    if (rank == 0) throw Error(ErrorCode::kParameter, "refactor rank must be positive");
    LoraAdapter out;
    out.rank = rank;
    out.alpha = rank;
    out.label = delta.label;
    for (const auto& [name, t] : delta.layers) {
        const std::size_t d_out = t.shape()[0];
        const std::size_t d_in = t.shape()[1];
        if (rank > std::min(d_out, d_in)) {
            throw Error(ErrorCode::kValidation, "rank " + std::to_string(rank) + " exceeds layer '" + name + "' " +
                                                    shape_to_string(t.shape()));
        }
        const std::vector<double> a(t.data().begin(), t.data().end());
        const ThinSvd svd = thin_svd(a, d_out, d_in);
        LoraLayer layer{TensorBlock(name, {rank, d_in}), TensorBlock(name, {d_out, rank})};
        for (std::size_t j = 0; j < rank; ++j) {
            const double root = std::sqrt(svd.s[j]);
            for (std::size_t r = 0; r < d_out; ++r) layer.b[r * rank + j] = static_cast<float>(svd.u[r * svd.k + j] * root);
            for (std::size_t c = 0; c < d_in; ++c)
                layer.a[j * d_in + c] = root > 0.0 ? static_cast<float>(svd.svt[j * d_in + c] / root) : 0.0f;
        }
        out.layers.emplace(name, std::move(layer));
    }
    return out;
}

}  // namespace lingmerge
