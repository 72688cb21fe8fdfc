#include <cstring>
#include <random>

#include <omp.h>

#include "doctest.h"
#include "lingmerge/error.hpp"
#include "lingmerge/merge.hpp"
#include "oracles.hpp"

using namespace lingmerge;

namespace {

DeltaMap vec_delta(const std::string& label, std::vector<float> v) {
    DeltaMap d;
    d.label = label;
    const std::size_t n = v.size();
    d.layers.emplace("w", TensorBlock("w", {1, n}, std::move(v)));
    return d;
}

std::vector<float> values(const DeltaMap& d, const std::string& layer = "w") { return oracle::to_vec(d.layers.at(layer)); }

bool bitwise_equal(const DeltaMap& a, const DeltaMap& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (const auto& [k, t] : a.layers) {
        if (!b.layers.contains(k) || !same_bits(t, b.layers.at(k))) return false;
    }
    return true;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected lingmerge::Error");
    return ErrorCode::kFormat;
}

MergeConfig config(std::vector<Method> pipeline, double density, std::vector<double> weights = {}) {
    MergeConfig c;
    c.pipeline = std::move(pipeline);
    c.density = density;
    c.weights = std::move(weights);
    return c;
}

DeltaMap scaled(const DeltaMap& d, float c) {
    DeltaMap out = d;
    for (auto& [k, t] : out.layers)
        for (auto& v : t.data()) v *= c;
    return out;
}

}  // namespace

TEST_CASE("trim") {
    CHECK(values(trim(vec_delta("a", {3, -1, 0.5f, 2}), 0.5)) == std::vector<float>{3, 0, 0, 2});
    CHECK(values(trim(vec_delta("a", {1, -1, 1, -1}), 0.5)) == std::vector<float>{1, -1, 0, 0});
    const auto d = vec_delta("a", {0.1f, -7, 2, 0});
    CHECK(bitwise_equal(trim(d, 1.0), d));
    CHECK(code_of([&] { trim(d, 0.0); }) == ErrorCode::kParameter);
    CHECK(code_of([&] { trim(d, 1.5); }) == ErrorCode::kParameter);
    CHECK(code_of([&] { trim(d, -0.1); }) == ErrorCode::kParameter);
    // 0.3 * 10 is 3.0000000000000004 in binary; k must still be 3.
    const auto ten = vec_delta("a", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(values(trim(ten, 0.3)) == std::vector<float>{0, 0, 0, 0, 0, 0, 0, 8, 9, 10});
}

TEST_CASE("trim cardinality and kept values") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        auto v = oracle::random_vector(rng, 1 + rng() % 50);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (rng() % 4 == 0) v[i] = 0.0f;
        const double d = (1 + rng() % 20) / 20.0;
        const auto k = static_cast<std::size_t>(std::ceil(d * v.size() - 1e-9));
        const auto out = values(trim(vec_delta("a", v), d));
        const auto nonzero_in = std::count_if(v.begin(), v.end(), [](float x) { return x != 0.0f; });
        const auto nonzero_out = std::count_if(out.begin(), out.end(), [](float x) { return x != 0.0f; });
        CHECK(static_cast<std::size_t>(nonzero_out) <= k);
        if (static_cast<std::size_t>(nonzero_in) >= k) CHECK(static_cast<std::size_t>(nonzero_out) == k);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK((out[i] == 0.0f || out[i] == v[i]));
        CHECK(out == oracle::trim(v, d));
    }
}

TEST_CASE("dare_prune") {
    std::mt19937_64 rng(4);
    auto ds = oracle::random_deltas(rng, 1, 3, 12);
    const auto& d = ds[0];
    CHECK(bitwise_equal(dare_prune(d, 0.0, 7), d));
    CHECK(bitwise_equal(dare_prune(d, 0.4, 7), dare_prune(d, 0.4, 7)));
    CHECK_FALSE(bitwise_equal(dare_prune(d, 0.4, 7), dare_prune(d, 0.4, 8)));
    CHECK(code_of([&] { dare_prune(d, 1.0, 1); }) == ErrorCode::kParameter);
    CHECK(code_of([&] { dare_prune(d, -0.1, 1); }) == ErrorCode::kParameter);

    SUBCASE("survivors are rescaled by 1/(1-p)") {
        const auto out = dare_prune(d, 0.25, 3);
        for (const auto& [k, t] : out.layers) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const float in = d.layers.at(k)[i];
                CHECK((t[i] == 0.0f || t[i] == static_cast<float>(in / 0.75)));
            }
        }
    }
    SUBCASE("different labels draw different masks") {
        auto other = d;
        other.label = "other";
        CHECK_FALSE(bitwise_equal(dare_prune(d, 0.5, 1), dare_prune(other, 0.5, 1)));
    }
    SUBCASE("Monte-Carlo mean of a scalar stays unbiased") {
        const auto one = vec_delta("s", {1.0f});
        double sum = 0.0;
        for (std::uint64_t seed = 0; seed < 10000; ++seed) sum += dare_prune(one, 0.5, seed).layers.at("w")[0];
        CHECK(std::fabs(sum / 10000 - 1.0) <= 0.02);
    }
}

TEST_CASE("elect_sign and disjoint_merge on enumerated entries") {
    auto run = [](std::vector<float> vals, std::vector<double> w) {
        std::vector<DeltaMap> ds;
        for (std::size_t m = 0; m < vals.size(); ++m) ds.push_back(vec_delta("m" + std::to_string(m), {vals[m]}));
        const auto signs = elect_sign(ds, w);
        const auto merged = disjoint_merge(ds, signs, w);
        return std::pair{signs.at("w").data[0], merged.layers.at("w")[0]};
    };
    CHECK(run({2, -1, -0.5f}, {1, 1, 1}) == std::pair<std::int8_t, float>{1, 2.0f});
    CHECK(run({1, -1}, {1, 1}).first == 0);
    CHECK(run({1, -1}, {1, 1}).second == 0.0f);
    CHECK(run({1, -3}, {4, 1}) == std::pair<std::int8_t, float>{1, 1.0f});
    CHECK(run({2, 4}, {1, 1}).second == 3.0f);
    CHECK(run({0, 0, 0}, {1, 1, 1}) == std::pair<std::int8_t, float>{0, 0.0f});

    std::vector<DeltaMap> mismatched{vec_delta("a", {1, 2}), vec_delta("b", {1, 2, 3})};
    const std::vector<double> w{1, 1};
    CHECK(code_of([&] { elect_sign(mismatched, w); }) == ErrorCode::kAlignment);
}

TEST_CASE("ties_merge") {
    std::mt19937_64 rng(31);
    auto ds = oracle::random_deltas(rng, 3, 2, 9);

    CHECK(bitwise_equal(ties_merge(std::span(ds).first(1), config({Method::kTies}, 1.0)), ds[0]));
    std::vector<DeltaMap> dup{ds[0], ds[0]};
    CHECK(bitwise_equal(ties_merge(dup, config({Method::kTies}, 1.0)), ds[0]));
    CHECK(code_of([] { ties_merge({}, MergeConfig{}); }) == ErrorCode::kParameter);

    SUBCASE("three 4-entry vectors at d=0.5 against the entrywise oracle") {
        const std::vector<std::vector<float>> models{{0.9f, -0.2f, 0.4f, -0.7f}, {-0.3f, 0.8f, 0.1f, -0.6f},
                                                     {0.5f, 0.5f, -0.9f, 0.05f}};
        std::vector<DeltaMap> in;
        for (std::size_t m = 0; m < 3; ++m) in.push_back(vec_delta("m" + std::to_string(m), models[m]));
        const auto got = values(ties_merge(in, config({Method::kTies}, 0.5)));
        // trimmed: {0.9,0,0,-0.7} {0,0.8,0,-0.6} {0.5,0,-0.9,0}; m2's 0.5/0.5 tie keeps index 0
        const std::vector<float> expect{0.7f, 0.8f, -0.9f, -0.65f};
        for (std::size_t i = 0; i < 4; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-6));
        CHECK(got == oracle::ties(models, {1, 1, 1}, 0.5));
    }
    SUBCASE("weight vector of the wrong length") {
        CHECK(code_of([&] { ties_merge(ds, config({Method::kTies}, 1.0, {1, 1})); }) == ErrorCode::kParameter);
    }
}

TEST_CASE("TIES properties on random inputs") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n_models = 2 + rng() % 4;
        auto ds = oracle::random_deltas(rng, n_models, 1 + rng() % 3, 8);
        std::vector<double> w;
        for (std::size_t m = 0; m < n_models; ++m) w.push_back(0.25 + (rng() % 16) / 4.0);
        const double d = (1 + rng() % 4) / 4.0;
        const auto cfg = config({Method::kTies}, d, w);
        const auto out = ties_merge(ds, cfg);

        std::vector<DeltaMap> trimmed;
        for (const auto& x : ds) trimmed.push_back(trim(x, d));
        const auto signs = elect_sign(trimmed, w);
        for (const auto& [name, t] : out.layers) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const auto s = signs.at(name).data[i];
                if (t[i] != 0.0f) CHECK((t[i] > 0) == (s > 0));
                float lo = INFINITY, hi = -INFINITY;
                for (const auto& tr : trimmed) {
                    const float v = tr.layers.at(name)[i];
                    if ((s > 0 && v > 0) || (s < 0 && v < 0)) {
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
                if (lo <= hi) {
                    CHECK(t[i] >= lo);
                    CHECK(t[i] <= hi);
                }
            }
        }

        // Positive scaling: a power of two commutes exactly.
        CHECK(bitwise_equal(ties_merge(std::vector{scaled(ds[0], 4), scaled(ds[1], 4)}, config({Method::kTies}, d)),
                            scaled(ties_merge(std::vector{ds[0], ds[1]}, config({Method::kTies}, d)), 4)));
        const auto by3 = ties_merge(std::vector{scaled(ds[0], 3), scaled(ds[1], 3)}, config({Method::kTies}, d));
        const auto base = ties_merge(std::vector{ds[0], ds[1]}, config({Method::kTies}, d));
        for (const auto& [name, t] : by3.layers)
            for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(3.0f * base.layers.at(name)[i]).epsilon(1e-6));

        auto w7 = w;
        for (auto& x : w7) x *= 7.3;
        const auto out7 = ties_merge(ds, config({Method::kTies}, d, w7));
        for (const auto& [name, t] : out.layers)
            CHECK(oracle::max_abs_diff(t.data(), out7.layers.at(name).data()) <= 1e-6);
    }
}

TEST_CASE("knots_transform") {
    std::mt19937_64 rng(5);
    SUBCASE("reconstruction and orthonormality on 6x4, M=3") {
        std::vector<DeltaMap> ds(3);
        for (int m = 0; m < 3; ++m) {
            ds[m].label = "m" + std::to_string(m);
            ds[m].layers.emplace("l", oracle::random_tensor(rng, "l", 6, 4));
        }
        const auto t = knots_transform(ds).at("l");
        CHECK(t.u.shape() == std::vector<std::size_t>{6, 6});
        CHECK(t.v_parts.size() == 3);
        CHECK(std::is_sorted(t.singular_values.rbegin(), t.singular_values.rend()));
        double rec = 0.0, orth = 0.0;
        for (int m = 0; m < 3; ++m) {
            for (std::size_t r = 0; r < 6; ++r)
                for (std::size_t c = 0; c < 4; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < 6; ++j) acc += static_cast<double>(t.u[r * 6 + j]) * t.v_parts[m][j * 4 + c];
                    rec = std::max(rec, std::fabs(acc - ds[m].layers.at("l")[r * 4 + c]));
                }
        }
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < 6; ++r) acc += static_cast<double>(t.u[r * 6 + i]) * t.u[r * 6 + j];
                orth = std::max(orth, std::fabs(acc - (i == j)));
            }
        CHECK(rec <= 1e-5);
        CHECK(orth <= 1e-5);
    }
    SUBCASE("identical inputs give identical scaled V blocks") {
        auto ds = oracle::random_deltas(rng, 1, 2, 7);
        std::vector<DeltaMap> two{ds[0], ds[0]};
        two[1].label = "copy";
        for (const auto& [name, t] : knots_transform(two))
            CHECK(oracle::max_abs_diff(t.v_parts[0].data(), t.v_parts[1].data()) <= 1e-5);
    }
    SUBCASE("one input is rejected") {
        auto ds = oracle::random_deltas(rng, 1, 1, 4);
        CHECK(code_of([&] { knots_transform(ds); }) == ErrorCode::kParameter);
    }
}

TEST_CASE("knots_merge") {
    std::mt19937_64 rng(6);
    SUBCASE("M identical inputs at d=1 return the input") {
        for (std::size_t m : {2u, 3u, 5u}) {
            auto base = oracle::random_deltas(rng, 1, 3, 10)[0];
            std::vector<DeltaMap> same(m, base);
            for (std::size_t i = 0; i < m; ++i) same[i].label = "c" + std::to_string(i);
            const auto out = knots_merge(same, config({Method::kKnots, Method::kTies}, 1.0));
            for (const auto& [name, t] : out.layers) {
                CHECK(t.shape() == base.layers.at(name).shape());
                CHECK(oracle::max_abs_diff(t.data(), base.layers.at(name).data()) <= 1e-4);
            }
        }
    }
    SUBCASE("equals transform -> TIES -> reconstruct composed by hand") {
        std::vector<DeltaMap> ds(3);
        for (int m = 0; m < 3; ++m) {
            ds[m].label = "m" + std::to_string(m);
            ds[m].layers.emplace("l", oracle::random_tensor(rng, "l", 4, 3));
        }
        for (double d : {1.0, 0.5}) {
            const auto got = knots_merge(ds, config({Method::kKnots, Method::kTies}, d)).layers.at("l");
            const auto t = knots_transform(ds).at("l");
            std::vector<std::vector<float>> parts;
            for (const auto& p : t.v_parts) parts.push_back(oracle::to_vec(p));
            const auto merged = oracle::ties(parts, {1, 1, 1}, d);
            const std::size_t k = t.u.shape()[1];
            for (std::size_t r = 0; r < 4; ++r)
                for (std::size_t c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < k; ++j) acc += static_cast<double>(t.u[r * k + j]) * merged[j * 3 + c];
                    CHECK(got[r * 3 + c] == static_cast<float>(acc));
                }
        }
    }
}

TEST_CASE("merge dispatch") {
    std::mt19937_64 rng(12);
    auto ds = oracle::random_deltas(rng, 4, 3, 16);

    SUBCASE("DARE-TIES at p=0, d=1 is bitwise TIES at d=1") {
        auto dt = config({Method::kDare, Method::kTies}, 1.0);
        CHECK(dt.effective_drop_rate() == 0.0);
        CHECK(bitwise_equal(merge(ds, dt), merge(ds, config({Method::kTies}, 1.0))));
        auto dts = config({Method::kDare, Method::kKnots, Method::kTies}, 1.0);
        CHECK(bitwise_equal(merge(ds, dts), merge(ds, config({Method::kKnots, Method::kTies}, 1.0))));
    }
    SUBCASE("unsupported pipelines") {
        CHECK(code_of([&] { merge(ds, config({Method::kKnots}, 1.0)); }) == ErrorCode::kParameter);
        CHECK(code_of([&] { merge(ds, config({Method::kDare}, 1.0)); }) == ErrorCode::kParameter);
        CHECK(code_of([&] { merge(ds, config({Method::kTies, Method::kDare}, 1.0)); }) == ErrorCode::kParameter);
        CHECK(code_of([&] { merge(std::span(ds).first(1), config({Method::kKnots, Method::kTies}, 1.0)); }) ==
              ErrorCode::kParameter);
    }
    SUBCASE("permuting inputs with their weights leaves the output unchanged") {
        const std::vector<double> w{1, 2, 0.5, 3};
        for (auto pipeline : {std::vector{Method::kTies}, std::vector{Method::kDare, Method::kTies},
                              std::vector{Method::kKnots, Method::kTies}}) {
            auto cfg = config(pipeline, 0.5, w);
            cfg.seed = 9;
            const auto out = merge(ds, cfg);
            const std::vector<std::size_t> perm{2, 0, 3, 1};
            std::vector<DeltaMap> pds;
            std::vector<double> pw;
            for (auto p : perm) {
                pds.push_back(ds[p]);
                pw.push_back(w[p]);
            }
            auto pcfg = cfg;
            pcfg.weights = pw;
            const auto pout = merge(pds, pcfg);
            // KnOTS may flip singular vector signs under permutation; the product does not change.
            const double tol = 1e-6;
            for (const auto& [name, t] : out.layers)
                CHECK(oracle::max_abs_diff(t.data(), pout.layers.at(name).data()) <= tol);
        }
    }
    SUBCASE("output is labeled and deterministic across thread counts") {
        auto cfg = config({Method::kDare, Method::kKnots, Method::kTies}, 0.5);
        cfg.seed = 42;
        const int saved = omp_get_max_threads();
        omp_set_num_threads(1);
        const auto one = merge(ds, cfg);
        omp_set_num_threads(8);
        const auto eight = merge(ds, cfg);
        omp_set_num_threads(saved);
        CHECK(bitwise_equal(one, eight));
        CHECK(one.label == "DARE-KNOTS-TIES(d=0.5,p=0.5,seed=42)");
    }
}

TEST_CASE("MergeConfig JSON") {
    const auto cfg = MergeConfig::from_json(nlohmann::json::parse(
        R"({"pipeline":["DARE","TIES"],"density":0.5,"drop_rate":0.5,"weights":[1,1,1,1,1],"seed":42})"));
    CHECK(cfg.pipeline == std::vector{Method::kDare, Method::kTies});
    CHECK(cfg.density == 0.5);
    CHECK(cfg.effective_drop_rate() == 0.5);
    CHECK(cfg.weights.size() == 5);
    CHECK(cfg.seed == 42);
    CHECK(MergeConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());

    const auto knots = MergeConfig::from_json(nlohmann::json::parse(R"({"pipeline":["KnOTS","TIES"],"weights":1})"));
    CHECK(knots.pipeline == std::vector{Method::kKnots, Method::kTies});
    CHECK(knots.resolved_weights(3) == std::vector<double>{1, 1, 1});

    const auto dflt = MergeConfig::from_json(nlohmann::json::parse(R"({"pipeline":["DARE","TIES"],"density":0.7})"));
    CHECK(dflt.effective_drop_rate() == doctest::Approx(0.3));

    for (const char* bad : {R"({"pipeline":["KNOTS"]})", R"({"pipeline":["TIES"],"density":0})",
                            R"({"pipeline":["DARE","TIES"],"drop_rate":1})", R"({"pipeline":["TIES"],"weights":[1,-1]})",
                            R"({"pipeline":["TIES"],"colour":"red"})", R"({"pipeline":["MAGIC","TIES"]})",
                            R"({"pipeline":"TIES"})"}) {
        CHECK(code_of([&] { MergeConfig::from_json(nlohmann::json::parse(bad)); }) == ErrorCode::kParameter);
    }
}

TEST_CASE("refactor_rank") {
    std::mt19937_64 rng(13);
    const auto a = oracle::random_adapter(rng, "en", 3, 4, 12);
    auto a4 = a;
    // Make every layer at least 4 wide so rank 4 is representable.
    for (auto& [name, l] : a4.layers) {
        l.a = oracle::random_tensor(rng, name, 4, 4 + l.a.shape()[1]);
        l.b = oracle::random_tensor(rng, name, 4 + l.b.shape()[0], 4);
    }
    const auto d = compute_delta(a4);
    const auto r = refactor_rank(d, 4);
    CHECK(r.rank == 4);
    const auto back = compute_delta(r);
    for (const auto& [name, t] : d.layers) CHECK(oracle::max_abs_diff(t.data(), back.layers.at(name).data()) <= 1e-4);
    CHECK(code_of([&] { refactor_rank(d, 1000); }) == ErrorCode::kValidation);
}
