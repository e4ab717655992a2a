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
#include <algorithm>
#include <map>
#include <set>

#include "aknn/knn.hpp"
#include "aknn/metak.hpp"
#include "aknn/util.hpp"

namespace aknn {
namespace {

NeighborList make(std::initializer_list<std::pair<double, TokenId>> items) {
    NeighborList out;
    std::uint64_t i = 0;
    for (const auto& [d, v] : items) out.push_back({d, v, i++});
    return out;
}

/// Sorted random neighbor list with values in [0, vocab).
NeighborList random_neighbors(Rng& rng, std::size_t n, std::uint32_t vocab, double scale = 10.0) {
    std::vector<double> d(n);
    for (auto& x : d) x = scale * rng.uniform();
    std::sort(d.begin(), d.end());
    NeighborList out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({d[i], static_cast<TokenId>(rng.uniform_index(vocab)), i});
    return out;
}

/// Direct evaluation of the kNN softmax without max-subtraction.
Distribution direct_knn(const NeighborList& nbrs, double T, std::uint32_t vocab) {
    Distribution p(vocab, 0.0);
    double z = 0.0;
    for (const auto& n : nbrs) {
        p[n.value] += std::exp(-n.distance / T);
        z += std::exp(-n.distance / T);
    }
    for (auto& x : p) x /= z;
    return p;
}

Distribution random_dist(Rng& rng, std::size_t n) {
    Distribution p(n);
    double z = 0.0;
    for (auto& x : p) z += (x = rng.uniform() + 1e-3);
    for (auto& x : p) x /= z;
    return p;
}

TEST(KnnDistribution, SingleNeighbor) {
    const auto p = knn_distribution(make({{0.7, 3}}), 2.0, 5);
    EXPECT_EQ(p[3], 1.0);
    EXPECT_EQ(p[0] + p[1] + p[2] + p[4], 0.0);
}

TEST(KnnDistribution, Symmetry) {
    const auto p = knn_distribution(make({{1.2, 1}, {1.2, 2}}), 1.0, 4);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
    EXPECT_DOUBLE_EQ(p[2], 0.5);
}

TEST(KnnDistribution, ScalarOracle) {
    const auto p = knn_distribution(make({{0.0, 7}, {1.0, 9}}), 1.0, 10);
    EXPECT_NEAR(p[7], 0.731059, 1e-5);
    EXPECT_NEAR(p[9], 0.268941, 1e-5);
    EXPECT_NEAR(p[7], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(KnnDistribution, MatchesDirectImplementation) {
    Rng rng(41);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto nbrs = random_neighbors(rng, 1 + rng.uniform_index(32), 20);
        const double T = 0.5 + 20.0 * rng.uniform();
        const auto got = knn_distribution(nbrs, T, 20);
        const auto want = direct_knn(nbrs, T, 20);
        double sum = 0.0;
        for (std::size_t v = 0; v < 20; ++v) {
            ASSERT_NEAR(got[v], want[v], 1e-9);
            sum += got[v];
        }
        ASSERT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(KnnDistribution, SupportIsRetrievedValues) {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const auto nbrs = random_neighbors(rng, 1 + rng.uniform_index(16), 30);
        const auto p = knn_distribution(nbrs, 3.0, 30);
        std::set<TokenId> values;
        for (const auto& n : nbrs) values.insert(n.value);
        for (TokenId v = 0; v < 30; ++v) EXPECT_EQ(p[v] > 0.0, values.count(v) == 1);
    }
}

TEST(KnnDistribution, HugeDistancesStayFinite) {
    const auto p = knn_distribution(make({{1e6, 1}, {1e6 + 1, 2}}), 1.0, 3);
    EXPECT_TRUE(is_distribution(p));
    EXPECT_NEAR(p[1], 0.731059, 1e-5);
}

TEST(KnnDistribution, LowTemperatureConcentrates) {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        auto nbrs = random_neighbors(rng, 8, 10);
        nbrs[0].distance = nbrs[1].distance - 0.01;
        if (nbrs[0].distance < 0) {
            nbrs[0].distance = 0.0;
            for (std::size_t i = 1; i < nbrs.size(); ++i) nbrs[i].distance += 0.01;
        }
        const auto p = knn_distribution(nbrs, 1e-4, 10);
        EXPECT_GE(p[nbrs[0].value], 1.0 - 1e-6);
    }
}

TEST(KnnDistribution, HighTemperatureGivesFrequencies) {
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        const auto nbrs = random_neighbors(rng, 1 + rng.uniform_index(32), 10);
        const auto p = knn_distribution(nbrs, 1e6, 10);
        std::vector<double> freq(10, 0.0);
        for (const auto& n : nbrs) freq[n.value] += 1.0 / static_cast<double>(nbrs.size());
        double tv = 0.0;
        for (std::size_t v = 0; v < 10; ++v) tv += 0.5 * std::abs(p[v] - freq[v]);
        EXPECT_LT(tv, 1e-4);
    }
}

TEST(KnnDistribution, Errors) {
    EXPECT_THROW(knn_distribution({}, 1.0, 5), Error);
    EXPECT_THROW(knn_distribution(make({{0.0, 1}}), 0.0, 5), Error);
    EXPECT_THROW(knn_distribution(make({{0.0, 5}}), 1.0, 5), Error);
}

TEST(KnnDistribution, AddIsWeightedKnn) {
    Rng rng(45);
    const auto nbrs = random_neighbors(rng, 12, 15);
    std::vector<double> acc(15, 0.25);
    add_knn_distribution(nbrs, 2.0, 0.4, acc);
    const auto p = knn_distribution(nbrs, 2.0, 15);
    for (std::size_t v = 0; v < 15; ++v) EXPECT_NEAR(acc[v], 0.25 + 0.4 * p[v], 1e-15);
}

TEST(Interpolate, Endpoints) {
    Rng rng(46);
    const auto a = random_dist(rng, 9);
    const auto b = random_dist(rng, 9);
    EXPECT_EQ(interpolate(a, b, 0.0), b);
    EXPECT_EQ(interpolate(a, b, 1.0), a);
    EXPECT_EQ(argmax(interpolate(a, b, 0.0)), argmax(b));
    EXPECT_EQ(argmax(interpolate(a, b, 1.0)), argmax(a));
}

TEST(Interpolate, HandArithmetic) {
    const auto p = interpolate(std::vector<double>{1.0, 0.0}, std::vector<double>{0.2, 0.8}, 0.7);
    EXPECT_NEAR(p[0], 0.76, 1e-15);
    EXPECT_NEAR(p[1], 0.24, 1e-15);
}

TEST(Interpolate, Errors) {
    EXPECT_THROW(interpolate(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}, 0.5), Error);
    EXPECT_THROW(interpolate(std::vector<double>{1.0}, std::vector<double>{1.0}, 1.5), Error);
}

TEST(Vanilla, LambdaZeroIsBase) {
    Rng rng(47);
    const auto base = random_dist(rng, 10);
    const auto nbrs = random_neighbors(rng, 8, 10);
    EXPECT_EQ(vanilla_predict(base, nbrs, {8, 2.0, 0.0}), base);
}

TEST(Vanilla, NearestOnly) {
    Rng rng(48);
    const auto base = random_dist(rng, 10);
    const auto nbrs = random_neighbors(rng, 8, 10);
    const auto p = vanilla_predict(base, nbrs, {1, 2.0, 1.0});
    for (TokenId v = 0; v < 10; ++v) EXPECT_EQ(p[v], v == nbrs[0].value ? 1.0 : 0.0);
}

TEST(Vanilla, Composition) {
    const std::vector<double> base{0.1, 0.2, 0.3, 0.4};
    const auto nbrs = make({{0.0, 2}, {1.0, 0}, {0.5, 3}});
    const double p2 = 1.0 / (1.0 + std::exp(-1.0));
    const auto p = vanilla_predict(base, nbrs, {2, 1.0, 0.5});
    EXPECT_NEAR(p[0], 0.5 * (1 - p2) + 0.05, 1e-12);
    EXPECT_NEAR(p[1], 0.1, 1e-12);
    EXPECT_NEAR(p[2], 0.5 * p2 + 0.15, 1e-12);
    EXPECT_NEAR(p[3], 0.2, 1e-12);
}

TEST(Vanilla, TooFewNeighbors) {
    const std::vector<double> base{0.5, 0.5};
    EXPECT_THROW(vanilla_predict(base, make({{0.0, 1}}), {2, 1.0, 0.5}), Error);
    EXPECT_THROW(validate(VanillaConfig{0, 1.0, 0.5}), Error);
    EXPECT_THROW(validate(VanillaConfig{1, -1.0, 0.5}), Error);
    EXPECT_THROW(validate(VanillaConfig{1, 1.0, 1.5}), Error);
}

TEST(Uniform, KOne) {
    const std::vector<double> base{0.1, 0.2, 0.7};
    const auto p = uniform_predict(base, make({{0.3, 1}}), 1, 2.0);
    EXPECT_NEAR(p[0], 0.05, 1e-15);
    EXPECT_NEAR(p[1], 0.6, 1e-15);
    EXPECT_NEAR(p[2], 0.35, 1e-15);
}

TEST(Uniform, FixedPoint) {
    const std::vector<double> base{0.0, 1.0, 0.0};
    const auto p = uniform_predict(base, make({{0.1, 1}, {0.2, 1}, {0.3, 1}, {0.4, 1}}), 4, 2.0);
    EXPECT_NEAR(p[1], 1.0, 1e-15);
    EXPECT_EQ(p[0], 0.0);
}

TEST(Uniform, EqualsAggregateWithUniformWeights) {
    Rng rng(49);
    for (std::size_t K : {1u, 2u, 4u, 8u, 32u}) {
        for (int trial = 0; trial < 50; ++trial) {
            const auto base = random_dist(rng, 12);
            const auto nbrs = random_neighbors(rng, K, 12);
            const KChoices S(K);
            const std::vector<double> meta(S.size(), 1.0 / static_cast<double>(S.size()));
            const auto a = uniform_predict(base, nbrs, K, 2.0);
            const auto b = aggregate(meta, nbrs, base, 2.0);
            for (std::size_t v = 0; v < 12; ++v) ASSERT_NEAR(a[v], b[v], 1e-12);
        }
    }
}

TEST(Distribution, Helpers) {
    EXPECT_TRUE(is_distribution(std::vector<double>{0.25, 0.75}));
    EXPECT_FALSE(is_distribution(std::vector<double>{0.25, 0.7}));
    EXPECT_FALSE(is_distribution(std::vector<double>{-0.25, 1.25}));
    EXPECT_FALSE(is_distribution(std::vector<double>{NAN, 1.0}));
    EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
}

}  // namespace
}  // namespace aknn
