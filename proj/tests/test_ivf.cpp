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

#include <fstream>
#include <set>

#include "aknn/ivf.hpp"
#include "testutil.hpp"

namespace aknn {
namespace {

using testing::brute_force;
using testing::random_datastore;
using testing::random_query;
using testing::read_file;
using testing::temp_dir;

/// `blobs` Gaussian clusters of `per_blob` points with unit spread around centers `separation` apart.
Datastore clustered(Rng& rng, std::size_t blobs, std::size_t per_blob, std::uint32_t dim, double separation,
                    std::vector<std::size_t>* labels = nullptr) {
    std::vector<std::vector<double>> centers(blobs, std::vector<double>(dim));
    for (auto& c : centers) {
        for (auto& x : c) x = separation * rng.normal();
    }
    std::vector<float> keys;
    std::vector<TokenId> values;
    for (std::size_t i = 0; i < blobs * per_blob; ++i) {
        const std::size_t b = i % blobs;
        for (std::size_t j = 0; j < dim; ++j) keys.push_back(static_cast<float>(centers[b][j] + rng.normal()));
        values.push_back(static_cast<TokenId>(b));
        if (labels) labels->push_back(b);
    }
    return Datastore(dim, static_cast<std::uint32_t>(blobs), std::move(keys), std::move(values));
}

TEST(Ivf, FullProbeEqualsExact) {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const bool ints = trial % 2 == 0;
        const std::uint32_t dim = 1 + static_cast<std::uint32_t>(rng.uniform_index(16));
        const auto ds = random_datastore(rng, 1 + rng.uniform_index(300), dim, 40, ints);
        const auto index = train_ivf(ds, {1 + rng.uniform_index(std::min<std::size_t>(ds.size(), 16)), 10, 7});
        for (int q = 0; q < 10; ++q) {
            const auto query = random_query(rng, dim, ints);
            const std::size_t k = 1 + rng.uniform_index(ds.size());
            EXPECT_EQ(index.search(ds, query, k, index.n_centroids()), exact_search(ds, query, k));
        }
    }
}

TEST(Ivf, StoredKeyIsFoundAtDistanceZero) {
    Rng rng(22);
    const auto ds = random_datastore(rng, 200, 8, 40);
    const auto index = train_ivf(ds, {16, 10, 1});
    const auto r = index.search(ds, ds.key(37), 1, index.n_centroids());
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].index, 37u);
    EXPECT_EQ(r[0].distance, 0.0);
}

TEST(Ivf, OnePointPerCluster) {
    Rng rng(23);
    const auto ds = random_datastore(rng, 40, 4, 10);
    const auto index = train_ivf(ds, {40, 10, 3});
    for (const auto& list : index.lists()) EXPECT_EQ(list.size(), 1u);
}

TEST(Ivf, SeparatedBlobsSplitCleanly) {
    Rng rng(24);
    std::vector<std::size_t> labels;
    const auto ds = clustered(rng, 2, 100, 8, 20.0, &labels);
    const auto index = train_ivf(ds, {2, 20, 5});
    ASSERT_EQ(index.n_centroids(), 2u);
    for (const auto& list : index.lists()) {
        ASSERT_EQ(list.size(), 100u);
        for (auto i : list) EXPECT_EQ(labels[i], labels[list.front()]);
    }
}

TEST(Ivf, EveryEntryInExactlyOneListAtItsNearestCentroid) {
    Rng rng(25);
    const auto ds = random_datastore(rng, 500, 6, 40);
    const auto index = train_ivf(ds, {20, 15, 9});
    std::vector<int> seen(ds.size(), 0);
    for (std::size_t c = 0; c < index.n_centroids(); ++c) {
        for (auto i : index.lists()[c]) {
            ++seen[i];
            const double own = distance(ds.key(i), index.centroid(c), Metric::kSquaredL2);
            for (std::size_t o = 0; o < index.n_centroids(); ++o) {
                EXPECT_LE(own, distance(ds.key(i), index.centroid(o), Metric::kSquaredL2) + 1e-9);
            }
        }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_EQ(index.entry_count(), ds.size());
}

TEST(Ivf, ObjectiveNeverIncreases) {
    Rng rng(26);
    const auto ds = clustered(rng, 12, 50, 8, 3.0);
    std::vector<double> trace;
    train_ivf(ds, {12, 25, 4}, &trace);
    ASSERT_FALSE(trace.empty());
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] * (1 + 1e-12));
}

TEST(Ivf, DeterministicForSeed) {
    Rng rng(27);
    const auto ds = random_datastore(rng, 300, 8, 40);
    EXPECT_EQ(train_ivf(ds, {10, 10, 5}), train_ivf(ds, {10, 10, 5}));
}

TEST(Ivf, NeverPads) {
    Rng rng(28);
    const auto ds = clustered(rng, 4, 20, 4, 30.0);
    const auto index = train_ivf(ds, {4, 20, 2});
    const auto query = ds.key(0);
    const auto r = index.search(ds, query, 200, 1);
    const auto list = index.lists()[index.probe_order(query, 1)[0]];
    EXPECT_LT(list.size(), ds.size());
    EXPECT_EQ(r.size(), list.size());
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_TRUE(neighbor_before(r[i - 1], r[i]));
}

TEST(Ivf, RecallOnClusteredData) {
    Rng rng(29);
    const auto ds = clustered(rng, 64, 2000 / 64 + 1, 16, 2.0);
    const auto index = train_ivf(ds, {64, 20, 8});
    std::size_t hits = 0;
    for (int q = 0; q < 100; ++q) {
        const auto base = ds.key(rng.uniform_index(ds.size()));
        std::vector<float> query(base.begin(), base.end());
        for (auto& x : query) x += static_cast<float>(0.3 * rng.normal());
        const auto exact = exact_search(ds, query, 8);
        const auto approx = index.search(ds, query, 8, 8);
        std::set<std::uint64_t> want;
        for (const auto& n : exact) want.insert(n.index);
        for (const auto& n : approx) hits += want.count(n.index);
    }
    EXPECT_GE(hits / 800.0, 0.9);
}

TEST(Ivf, ProbeOrderIsNearestFirst) {
    Rng rng(30);
    const auto ds = random_datastore(rng, 100, 4, 10);
    const auto index = train_ivf(ds, {8, 10, 1});
    const auto query = random_query(rng, 4);
    const auto order = index.probe_order(query, 8);
    ASSERT_EQ(order.size(), 8u);
    for (std::size_t i = 1; i < order.size(); ++i) {
        EXPECT_LE(distance(query, index.centroid(order[i - 1]), Metric::kSquaredL2),
                  distance(query, index.centroid(order[i]), Metric::kSquaredL2));
    }
}

TEST(Ivf, Errors) {
    Rng rng(31);
    const Datastore empty(4, 10);
    EXPECT_THROW(train_ivf(empty, {1, 5, 0}), Error);
    const auto ds = random_datastore(rng, 10, 4, 10);
    EXPECT_THROW(train_ivf(ds, {11, 5, 0}), Error);
    EXPECT_THROW(train_ivf(ds, {0, 5, 0}), Error);
    const auto index = train_ivf(ds, {2, 5, 0});
    const auto other = random_datastore(rng, 10, 4, 10);
    try {
        index.check_compatible(other);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    }
}

TEST(IvfPersistence, RoundTripAndCorruption) {
    const auto dir = temp_dir("ivf");
    Rng rng(32);
    const auto ds = random_datastore(rng, 300, 8, 40);
    const auto index = train_ivf(ds, {12, 10, 6});
    save_ivf(index, dir / "a.ivf");
    const auto back = load_ivf(dir / "a.ivf");
    EXPECT_EQ(back, index);
    back.check_compatible(ds);
    save_ivf(back, dir / "b.ivf");
    const auto bytes = read_file(dir / "a.ivf");
    EXPECT_EQ(bytes, read_file(dir / "b.ivf"));
    EXPECT_EQ(bytes.substr(0, 8), "ADKNNIV1");
    std::string bad = bytes;
    bad[0] = 'Z';
    std::ofstream(dir / "bad.ivf", std::ios::binary) << bad;
    EXPECT_THROW(load_ivf(dir / "bad.ivf"), Error);
    std::ofstream(dir / "short.ivf", std::ios::binary) << bytes.substr(0, bytes.size() - 8);
    EXPECT_THROW(load_ivf(dir / "short.ivf"), Error);
}

}  // namespace
}  // namespace aknn
