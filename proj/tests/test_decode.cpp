// Copyright 2026 The aknn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "aknn/basemodel.hpp"
#include "aknn/decode.hpp"
#include "aknn/ivf.hpp"
#include "aknn/metak.hpp"
#include "testutil.hpp"

namespace aknn {
namespace {

/// Next-token distributions scripted by prefix: first a=0.6 / b=0.4; after "a"
/// a three-way tie between EOS, a and b; after "b" EOS with 0.9.
class ScriptedModel final : public BaseModel {
  public:
    static constexpr TokenId kA = 2, kB = 3;
    std::uint32_t vocab_size() const override { return 4; }
    std::uint32_t context_dim() const override { return 1; }
    void encode_context(std::span<const TokenId>, std::span<const TokenId> prefix, std::span<float> out) const override {
        out[0] = static_cast<float>(prefix.size());
    }
    void next_token_dist(std::span<const TokenId>, std::span<const TokenId> prefix,
                         std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
        if (prefix.empty()) {
            out[kA] = 0.6;
            out[kB] = 0.4;
        } else if (prefix.back() == kA) {
            out[kEos] = out[kA] = out[kB] = 1.0 / 3.0;
        } else {
            out[kEos] = 0.9;
            out[kA] = 0.1;
        }
    }
};

/// A small synthetic world: base model fit on a general corpus, one domain.
struct World {
    DomainSpec spec;
    std::unique_ptr<ToyBaseModel> base;
    Corpus train, dev, test;
    std::unique_ptr<Datastore> ds;
    std::unique_ptr<IvfIndex> index;

    World() {
        spec.vocab_size = 400;
        spec.source_lo = 2;
        spec.source_hi = 200;
        spec.general_rate = 0.1;
        spec.world_seed = 5;
        spec.seed = 6;
        DomainSpec general = spec;
        general.source_hi = 400;
        general.zipf = 0.0;
        general.successor_prob = 0.0;
        general.override_rate = 0.0;
        general.noise_rate = 0.0;
        general.seed = 7;
        base = std::make_unique<ToyBaseModel>(ToyEncoder(400, 16, 2, 8, 2.0),
                                              fit_count_model(gen_corpus(general, 3000, Split::kTrain, 1), 0.01, 400));
        train = gen_corpus(spec, 300, Split::kTrain, 2);
        dev = gen_corpus(spec, 400, Split::kDev, 2);
        test = gen_corpus(spec, 150, Split::kTest, 2);
        ds = std::make_unique<Datastore>(build_datastore(*base, train));
        index = std::make_unique<IvfIndex>(train_ivf(*ds, {16, 10, 3}));
    }
};

World& world() {
    static World w;
    return w;
}

MetakModel random_metak(std::size_t K, std::uint64_t seed) {
    MetakConfig c;
    c.max_k = K;
    c.hidden = 8;
    c.seed = seed;
    return MetakModel::init(c);
}

/// Zero weights and a bias that puts all mass, exactly, on k = 0.
MetakModel base_only_metak(std::size_t K) {
    auto m = random_metak(K, 1);
    std::fill(m.params.flat().begin(), m.params.flat().end(), 0.0);
    m.params.b2()[0] = 1000.0;
    return m;
}

TEST(Retriever, FullProbeUsesExactSearch) {
    auto& w = world();
    const Retriever r(*w.ds, w.index.get(), w.index->n_centroids());
    EXPECT_FALSE(r.uses_index());
    const Retriever partial(*w.ds, w.index.get(), 2);
    EXPECT_TRUE(partial.uses_index());
    EXPECT_THROW(Retriever(*w.ds, w.index.get(), 0), Error);
    EXPECT_THROW(Retriever(*w.ds, w.index.get(), 17), Error);
}

TEST(Retriever, InsufficientNeighborsIsAnError) {
    auto& w = world();
    const Retriever exact(*w.ds);
    const auto q = w.base->encoder().encode(w.test.pairs[0].source, {});
    try {
        exact.search(q, w.ds->size() + 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kOutOfRange);
    }
    const Retriever partial(*w.ds, w.index.get(), 1);
    EXPECT_THROW(partial.search(q, w.ds->size()), Error);
}

TEST(Retriever, BatchAndExclusion) {
    auto& w = world();
    for (const Retriever& r : {Retriever(*w.ds), Retriever(*w.ds, w.index.get(), 4)}) {
        std::vector<float> queries;
        for (std::size_t i = 0; i < 5; ++i) {
            const auto q = w.base->encoder().encode(w.test.pairs[i].source, {});
            queries.insert(queries.end(), q.begin(), q.end());
        }
        const auto batch = r.search_batch(queries, 8);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(batch[i], r.search(std::span<const float>(queries).subspan(i * 16, 16), 8));
        }
    }
    const Retriever r(*w.ds);
    const auto key = w.ds->key(10);
    const auto full = r.search(key, 9);
    const auto without = r.search_excluding(key, 8, 10);
    ASSERT_EQ(without.size(), 8u);
    for (const auto& n : without) EXPECT_NE(n.index, 10u);
    EXPECT_EQ(r.search_excluding(key, 8, w.ds->size() + 5), r.search(key, 8));
    EXPECT_LE(full.size(), 9u);
}

TEST(Combine, MatchesComponentFunctions) {
    auto& w = world();
    const Retriever r(*w.ds);
    const auto& pair = w.test.pairs[3];
    const auto q = w.base->encoder().encode(pair.source, {});
    const auto nbrs = r.search(q, 8);
    std::vector<double> base(400);
    w.base->next_token_dist(pair.source, {}, base);
    EXPECT_EQ(combine({Variant::kBase, 1, 2.0, 0.0}, nullptr, base, nbrs), base);
    EXPECT_EQ(combine({Variant::kVanilla, 4, 2.0, 0.6}, nullptr, base, nbrs),
              vanilla_predict(base, nbrs, {4, 2.0, 0.6}));
    EXPECT_EQ(combine({Variant::kUniform, 8, 2.0, 0.0}, nullptr, base, nbrs), uniform_predict(base, nbrs, 8, 2.0));
    const auto m = random_metak(8, 3);
    EXPECT_EQ(combine({Variant::kAdaptive, 8, 2.0, 0.0}, &m, base, nbrs),
              aggregate(metak_forward(m, extract_features(nbrs, 8)), nbrs, base, 2.0));
    EXPECT_THROW(combine({Variant::kAdaptive, 4, 2.0, 0.0}, &m, base, nbrs), Error);
    EXPECT_THROW(combine({Variant::kAdaptive, 8, 2.0, 0.0}, nullptr, base, nbrs), Error);
}

TEST(Predictor, ConfigurationErrors) {
    auto& w = world();
    const Retriever r(*w.ds);
    const auto m = random_metak(8, 3);
    EXPECT_THROW(Predictor(*w.base, nullptr, {Variant::kVanilla, 8, 2.0, 0.5}), Error);
    EXPECT_THROW(Predictor(*w.base, &r, {Variant::kAdaptive, 8, 2.0, 0.0}), Error);
    EXPECT_THROW(Predictor(*w.base, &r, {Variant::kAdaptive, 16, 2.0, 0.0}, &m), Error);
    EXPECT_THROW(Predictor(*w.base, &r, {Variant::kVanilla, 8, 0.0, 0.5}), Error);
    EXPECT_THROW(Predictor(*w.base, &r, {Variant::kVanilla, 8, 2.0, 1.5}), Error);
    const ScriptedModel scripted;
    EXPECT_THROW(Predictor(scripted, &r, {Variant::kVanilla, 8, 2.0, 0.5}), Error);
    for (auto v : {Variant::kBase, Variant::kVanilla, Variant::kUniform, Variant::kAdaptive}) {
        EXPECT_EQ(parse_variant(to_string(v)), v);
    }
    EXPECT_THROW(parse_variant("knn"), Error);
}

TEST(Decode, MaxLength) {
    DecodeOptions o;
    EXPECT_EQ(max_decode_length(o, 5), 20u);
    o.max_len_a = 0;
    o.max_len_b = 0;
    EXPECT_EQ(max_decode_length(o, 5), 1u);
}

TEST(Decode, ScriptedBeamBeatsGreedy) {
    const ScriptedModel m;
    const Predictor p(m, nullptr, {Variant::kBase, 1, 1.0, 0.0});
    const std::vector<TokenId> src{5};
    EXPECT_EQ(greedy_decode(p, src, 10), std::vector<TokenId>{ScriptedModel::kA});
    EXPECT_EQ(beam_decode(p, src, 1, 0.6, 10), std::vector<TokenId>{ScriptedModel::kA});
    EXPECT_EQ(beam_decode(p, src, 2, 0.6, 10), std::vector<TokenId>{ScriptedModel::kB});
}

TEST(Decode, LengthLimit) {
    const ScriptedModel m;
    const Predictor p(m, nullptr, {Variant::kBase, 1, 1.0, 0.0});
    const std::vector<TokenId> src{5};
    EXPECT_TRUE(greedy_decode(p, src, 1).empty());
    EXPECT_TRUE(beam_decode(p, src, 3, 0.6, 1).empty());
    EXPECT_LE(beam_decode(p, src, 3, 0.6, 2).size(), 1u);
}

TEST(Decode, BaseGreedyFollowsTheGeneratorArgmaxPath) {
    DomainSpec spec;
    spec.vocab_size = 200;
    spec.source_hi = 200;
    spec.noise_rate = 0.0;
    spec.world_seed = 3;
    spec.seed = 4;
    const auto corpus = gen_corpus(spec, 3000, Split::kTrain, 1);
    const ToyBaseModel base(ToyEncoder(200, 8, 2, 1), fit_count_model(corpus, 0.01, 200));
    const Predictor p(base, nullptr, {Variant::kBase, 1, 1.0, 0.0});
    const DomainTables tables(spec);
    const auto test = gen_corpus(spec, 50, Split::kTest, 1);
    DecodeOptions o;
    o.beam = 0;
    const auto hyps = decode_corpus(p, test, o);
    for (std::size_t s = 0; s < test.size(); ++s) {
        std::vector<TokenId> want;
        for (TokenId x : test.pairs[s].source) want.push_back(tables.translation(x));
        EXPECT_EQ(hyps[s], want);
    }
}

class VariantDecode : public ::testing::TestWithParam<Variant> {};

TEST_P(VariantDecode, BeamOneEqualsGreedy) {
    auto& w = world();
    const Retriever r(*w.ds, w.index.get(), 8);
    const auto m = random_metak(8, 11);
    const Predictor p(*w.base, &r, {GetParam(), 8, 2.0, 0.5}, &m);
    for (const auto& pair : w.test.pairs) {
        const std::size_t len = max_decode_length({}, pair.source.size());
        ASSERT_EQ(beam_decode(p, pair.source, 1, 0.6, len), greedy_decode(p, pair.source, len));
    }
}

TEST_P(VariantDecode, BatchSizeDoesNotChangeOutput) {
    auto& w = world();
    const Retriever r(*w.ds);
    const auto m = random_metak(8, 12);
    const Predictor p(*w.base, &r, {GetParam(), 8, 2.0, 0.5}, &m);
    DecodeOptions one;
    one.beam = 0;
    DecodeOptions many = one;
    many.batch_size = 7;
    EXPECT_EQ(decode_corpus(p, w.test, one), decode_corpus(p, w.test, many));
}

TEST_P(VariantDecode, EveryStepEmitsADistribution) {
    auto& w = world();
    const Retriever r(*w.ds);
    const auto m = random_metak(8, 13);
    Predictor p(*w.base, &r, {GetParam(), 8, 2.0, 0.5}, &m);
    p.set_check_distributions(true);
    DecodeOptions o;
    o.beam = 4;
    decode_corpus(p, w.dev, o);
    o.beam = 0;
    o.batch_size = 16;
    decode_corpus(p, w.dev, o);
    teacher_forced_accuracy(p, w.dev);
    EXPECT_GE(p.checked_steps(), 10000u);
}

INSTANTIATE_TEST_SUITE_P(All, VariantDecode,
                         ::testing::Values(Variant::kBase, Variant::kVanilla, Variant::kUniform, Variant::kAdaptive),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Decode, BaseOnlyMetakReproducesBase) {
    auto& w = world();
    const Retriever r(*w.ds);
    const auto m = base_only_metak(8);
    const Predictor adaptive(*w.base, &r, {Variant::kAdaptive, 8, 2.0, 0.0}, &m);
    const Predictor base(*w.base, nullptr, {Variant::kBase, 1, 2.0, 0.0});
    for (std::size_t s = 0; s < 20; ++s) {
        const auto& pair = w.test.pairs[s];
        for (std::size_t t = 0; t < pair.target.size(); ++t) {
            const auto prefix = std::span(pair.target).first(t);
            ASSERT_EQ(adaptive.predict(pair.source, prefix), base.predict(pair.source, prefix));
        }
    }
    for (std::size_t beam : {0u, 4u}) {
        DecodeOptions o;
        o.beam = beam;
        EXPECT_EQ(decode_corpus(adaptive, w.test, o), decode_corpus(base, w.test, o));
    }
}

TEST(Accuracy, CountsGoldArgmax) {
    const ScriptedModel m;
    const Predictor p(m, nullptr, {Variant::kBase, 1, 1.0, 0.0});
    Corpus c;
    c.pairs.push_back({{5}, {ScriptedModel::kA, kEos}});
    c.pairs.push_back({{5}, {ScriptedModel::kB, kEos}});
    const auto r = teacher_forced_accuracy(p, c);
    EXPECT_EQ(r.total, 4u);
    EXPECT_EQ(r.correct, 3u);
    EXPECT_DOUBLE_EQ(r.accuracy(), 0.75);
}

}  // namespace
}  // namespace aknn
