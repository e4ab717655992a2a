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

#include <algorithm>
#include <cmath>
#include <fstream>

#include "aknn/kchoices.hpp"
#include "aknn/knn.hpp"
#include "aknn/metak.hpp"
#include "aknn/util.hpp"
#include "testutil.hpp"

namespace aknn {
namespace {

using testing::read_file;
using testing::temp_dir;

NeighborList random_neighbors(Rng& rng, std::size_t n, std::uint32_t vocab, double scale = 5.0) {
    std::vector<double> d(n);
    for (auto& x : d) x = scale * rng.uniform();
    std::sort(d.begin(), d.end());
    NeighborList out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({d[i], static_cast<TokenId>(rng.uniform_index(vocab)), i});
    return out;
}

Distribution random_dist(Rng& rng, std::size_t n) {
    Distribution p(n);
    double z = 0.0;
    for (auto& x : p) z += (x = rng.uniform() + 1e-3);
    for (auto& x : p) x /= z;
    return p;
}

MetakModel random_model(Rng& rng, std::size_t K, std::size_t H, Activation act = Activation::kRelu) {
    MetakConfig c;
    c.max_k = K;
    c.hidden = H;
    c.activation = act;
    MetakModel m = MetakModel::init(c);
    for (auto& w : m.params.flat()) w = rng.normal() * 0.5;
    return m;
}

MetakSample random_sample(Rng& rng, std::size_t K, std::uint32_t vocab) {
    MetakSample s;
    s.neighbors = random_neighbors(rng, K, vocab);
    s.features = extract_features(s.neighbors, K);
    s.base_dist = random_dist(rng, vocab);
    s.gold = rng.uniform() < 0.7 ? s.neighbors[rng.uniform_index(K)].value
                                 : static_cast<TokenId>(rng.uniform_index(vocab));
    return s;
}

/// Straight-line forward pass written independently of the library layout helpers.
Distribution reference_forward(const MetakModel& m, const std::vector<double>& x) {
    const std::size_t in = m.params.inputs(), h = m.params.hidden(), out = m.params.outputs();
    const auto flat = m.params.flat();
    std::vector<double> hid(h);
    for (std::size_t j = 0; j < h; ++j) {
        double a = flat[h * in + j];
        for (std::size_t i = 0; i < in; ++i) a += flat[j * in + i] * x[i];
        hid[j] = a > 0 ? a : 0;
    }
    std::vector<double> logit(out);
    const std::size_t w2 = h * in + h;
    for (std::size_t o = 0; o < out; ++o) {
        double a = flat[w2 + out * h + o];
        for (std::size_t j = 0; j < h; ++j) a += flat[w2 + o * h + j] * hid[j];
        logit[o] = a;
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double z = 0.0;
    for (auto& l : logit) z += (l = std::exp(l - mx));
    for (auto& l : logit) l /= z;
    return logit;
}

TEST(KChoices, Sets) {
    EXPECT_EQ(KChoices(1).values(), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(KChoices(8).values(), (std::vector<std::size_t>{0, 1, 2, 4, 8}));
    EXPECT_EQ(KChoices(32).values(), (std::vector<std::size_t>{0, 1, 2, 4, 8, 16, 32}));
    EXPECT_EQ(KChoices(32).size(), 7u);
    EXPECT_THROW(KChoices(0), Error);
    EXPECT_THROW(KChoices(6), Error);
}

TEST(Features, Counts) {
    NeighborList n{{0.1, 5, 0}, {0.2, 5, 1}, {0.4, 6, 2}, {0.9, 5, 3}};
    const auto f = extract_features(n, 4);
    EXPECT_EQ(f.counts, (std::vector<double>{1, 1, 2, 2}));
    EXPECT_EQ(f.distances, (std::vector<double>{0.1, 0.2, 0.4, 0.9}));
    EXPECT_EQ(f.concat().size(), 8u);
}

TEST(Features, AllSameAndAllDistinct) {
    NeighborList same, distinct;
    for (std::uint64_t i = 0; i < 8; ++i) {
        same.push_back({0.1 * i, 3, i});
        distinct.push_back({0.1 * i, static_cast<TokenId>(i), i});
    }
    EXPECT_EQ(extract_features(same, 8).counts, std::vector<double>(8, 1.0));
    EXPECT_EQ(extract_features(distinct, 8).counts, (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Features, InvariantsOnRandomLists) {
    Rng rng(51);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t K = std::size_t{1} << rng.uniform_index(6);
        const auto f = extract_features(random_neighbors(rng, K, 6), K);
        EXPECT_EQ(f.counts[0], 1.0);
        for (std::size_t i = 1; i < K; ++i) {
            EXPECT_GE(f.counts[i], f.counts[i - 1]);
            EXPECT_LE(f.counts[i], static_cast<double>(i + 1));
            EXPECT_GE(f.distances[i], f.distances[i - 1]);
        }
    }
}

TEST(Features, MasksAndErrors) {
    Rng rng(52);
    const auto n = random_neighbors(rng, 4, 5);
    const auto nc = extract_features(n, 4, FeatureMask::kNoCounts);
    const auto nd = extract_features(n, 4, FeatureMask::kNoDistances);
    EXPECT_EQ(nc.counts, std::vector<double>(4, 0.0));
    EXPECT_EQ(nd.distances, std::vector<double>(4, 0.0));
    EXPECT_EQ(nc.distances, extract_features(n, 4).distances);
    EXPECT_THROW(extract_features(n, 8), Error);
    for (auto m : {FeatureMask::kFull, FeatureMask::kNoCounts, FeatureMask::kNoDistances, FeatureMask::kNone}) {
        EXPECT_EQ(parse_feature_mask(to_string(m)), m);
    }
}

TEST(Forward, ZeroParamsGiveUniform) {
    MetakConfig c;
    c.max_k = 8;
    auto m = MetakModel::init(c);
    std::fill(m.params.flat().begin(), m.params.flat().end(), 0.0);
    Rng rng(53);
    const auto p = metak_forward(m, extract_features(random_neighbors(rng, 8, 5), 8));
    for (double x : p) EXPECT_DOUBLE_EQ(x, 0.2);
}

TEST(Forward, MatchesReference) {
    Rng rng(54);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t K = std::size_t{1} << rng.uniform_index(6);
        const auto m = random_model(rng, K, 1 + rng.uniform_index(16));
        const auto x = extract_features(random_neighbors(rng, K, 7), K).concat();
        const auto got = metak_forward(m, x);
        const auto want = reference_forward(m, x);
        ASSERT_EQ(got.size(), KChoices(K).size());
        double sum = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_NEAR(got[i], want[i], 1e-12);
            EXPECT_GT(got[i], 0.0);
            EXPECT_LT(got[i], 1.0);
            sum += got[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Forward, ScaledDistancesStayValid) {
    Rng rng(55);
    const auto m = random_model(rng, 8, 8);
    auto n = random_neighbors(rng, 8, 5);
    for (double scale : {1e-3, 1.0, 1e3, 1e6}) {
        auto scaled = n;
        for (auto& x : scaled) x.distance *= scale;
        EXPECT_TRUE(is_distribution(metak_forward(m, extract_features(scaled, 8))));
    }
}

TEST(Forward, NoFeaturesGivesConstantOutput) {
    Rng rng(56);
    const auto m = random_model(rng, 8, 8);
    const auto p0 = metak_forward(m, extract_features(random_neighbors(rng, 8, 5), 8, FeatureMask::kNone));
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = metak_forward(m, extract_features(random_neighbors(rng, 8, 5, 100.0), 8, FeatureMask::kNone));
        EXPECT_EQ(p, p0);
    }
}

TEST(Forward, ShapeMismatch) {
    Rng rng(57);
    const auto m = random_model(rng, 8, 8);
    EXPECT_THROW(metak_forward(m, std::vector<double>(10, 0.0)), Error);
}

TEST(Aggregate, DegenerateWeights) {
    Rng rng(58);
    const auto n = random_neighbors(rng, 8, 10);
    const auto base = random_dist(rng, 10);
    std::vector<double> first(5, 0.0), last(5, 0.0);
    first[0] = 1.0;
    last[4] = 1.0;
    EXPECT_EQ(aggregate(first, n, base, 2.0), base);
    const auto all = aggregate(last, n, base, 2.0);
    const auto knn = knn_distribution(n, 2.0, 10);
    for (std::size_t v = 0; v < 10; ++v) EXPECT_NEAR(all[v], knn[v], 1e-15);
}

TEST(Aggregate, ConvexCombinationIsValid) {
    Rng rng(59);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t K = std::size_t{1} << rng.uniform_index(6);
        const auto n = random_neighbors(rng, K, 15);
        const auto meta = random_dist(rng, KChoices(K).size());
        EXPECT_TRUE(is_distribution(aggregate(meta, n, random_dist(rng, 15), 1.0 + rng.uniform())));
    }
    const auto n = random_neighbors(rng, 4, 15);
    EXPECT_THROW(aggregate(std::vector<double>(3, 1.0 / 3), n, random_dist(rng, 15), 1.0), Error);
}

TEST(Loss, PerfectPrediction) {
    MetakSample s;
    for (std::uint64_t i = 0; i < 4; ++i) s.neighbors.push_back({0.1 * i, 2, i});
    s.features = extract_features(s.neighbors, 4);
    s.base_dist = {0.0, 0.0, 1.0};
    s.gold = 2;
    Rng rng(60);
    const auto m = random_model(rng, 4, 6);
    const std::vector<MetakSample> batch{s};
    const auto lg = loss_and_grad(m, batch, 2.0);
    EXPECT_NEAR(lg.loss, 0.0, 1e-12);
    for (double g : lg.grad) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Loss, ZeroParamsScalarOracle) {
    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_sample(rng, 8, 6);
        MetakConfig c;
        c.max_k = 8;
        auto m = MetakModel::init(c);
        std::fill(m.params.flat().begin(), m.params.flat().end(), 0.0);
        double p = s.base_dist[s.gold];
        for (std::size_t k : {1, 2, 4, 8}) {
            p += knn_distribution(std::span(s.neighbors).first(k), 2.0, 6)[s.gold];
        }
        p /= 5.0;
        const std::vector<MetakSample> batch{s};
        EXPECT_NEAR(loss_and_grad(m, batch, 2.0).loss, -std::log(p), 1e-12);
    }
}

TEST(Loss, FloorIsCounted) {
    MetakSample s;
    for (std::uint64_t i = 0; i < 2; ++i) s.neighbors.push_back({0.1 * i, 1, i});
    s.features = extract_features(s.neighbors, 2);
    s.base_dist = {1.0, 0.0, 0.0};
    s.gold = 2;
    Rng rng(62);
    const std::vector<MetakSample> batch{s};
    const auto lg = loss_and_grad(random_model(rng, 2, 4), batch, 1.0);
    EXPECT_EQ(lg.clamped, 1u);
    EXPECT_NEAR(lg.loss, -std::log(1e-12), 1e-9);
    for (double g : lg.grad) EXPECT_TRUE(std::isfinite(g));
}

constexpr double kGradientFloor = 1e-5;

double max_relative_gradient_error(Rng& rng, std::size_t K, Activation act) {
    auto m = random_model(rng, K, 1 + rng.uniform_index(12), act);
    std::vector<PreparedSample> batch;
    const std::size_t n = 1 + rng.uniform_index(4);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(prepare_sample(random_sample(rng, K, 6), 2.0));
    const auto analytic = loss_and_grad(m, batch).grad;
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const double orig = m.params.flat()[i];
        m.params.flat()[i] = orig + h;
        const double up = mean_loss(m, batch);
        m.params.flat()[i] = orig - h;
        const double down = mean_loss(m, batch);
        m.params.flat()[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kGradientFloor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
    }
    return worst;
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    Rng rng(63);
    for (std::size_t K : {4u, 8u}) {
        for (int trial = 0; trial < 50; ++trial) EXPECT_LT(max_relative_gradient_error(rng, K, Activation::kRelu), 1e-4);
    }
    for (int trial = 0; trial < 20; ++trial) EXPECT_LT(max_relative_gradient_error(rng, 4, Activation::kTanh), 1e-4);
}

TEST(Adam, ZeroGradientLeavesParams) {
    std::vector<double> p{1.0, -2.0, 3.0};
    AdamState s(3, {});
    adam_step(s, p, std::vector<double>(3, 0.0));
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepIsSignTimesLr) {
    std::vector<double> p{0.0, 0.0, 0.0};
    AdamState s(3, {});
    const std::vector<double> g{0.5, -3.0, 1e-3};
    adam_step(s, p, g);
    for (std::size_t i = 0; i < 3; ++i) {
        const double expect = -3e-4 * std::abs(g[i]) / (std::abs(g[i]) + 1e-8) * (g[i] > 0 ? 1 : -1);
        EXPECT_NEAR(p[i], expect, 1e-15);
        EXPECT_NEAR(std::abs(p[i]), 3e-4, 3e-4 * 1e-5);
    }
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, NonFiniteGradientIsRejected) {
    std::vector<double> p{1.0, 2.0};
    AdamState s(2, {});
    try {
        adam_step(s, p, std::vector<double>{0.1, NAN});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    }
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(s.step, 0u);
    EXPECT_EQ(s.m, std::vector<double>(2, 0.0));
}

TEST(Init, GlorotBounds) {
    const auto p = MetakParams::glorot(16, 32, 5, 9);
    const double a1 = std::sqrt(6.0 / 48.0), a2 = std::sqrt(6.0 / 37.0);
    for (double w : p.w1()) EXPECT_LE(std::abs(w), a1);
    for (double w : p.w2()) EXPECT_LE(std::abs(w), a2);
    for (double b : p.b1()) EXPECT_EQ(b, 0.0);
    for (double b : p.b2()) EXPECT_EQ(b, 0.0);
    EXPECT_EQ(p.size(), 16u * 32 + 32 + 32 * 5 + 5);
    EXPECT_EQ(p, MetakParams::glorot(16, 32, 5, 9));
    EXPECT_NE(p, MetakParams::glorot(16, 32, 5, 10));
}

std::vector<PreparedSample> synthetic_set(Rng& rng, std::size_t K, std::size_t n) {
    std::vector<PreparedSample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prepare_sample(random_sample(rng, K, 6), 2.0, i / 10));
    return out;
}

TEST(Train, ZeroStepsReturnsInit) {
    Rng rng(64);
    const auto set = synthetic_set(rng, 8, 50);
    MetakConfig c;
    c.max_k = 8;
    c.seed = 3;
    TrainOptions o;
    o.steps = 0;
    const auto r = train_metak(set, c, o);
    EXPECT_EQ(r.model, MetakModel::init(c));
    ASSERT_EQ(r.loss_curve.size(), 1u);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
    Rng rng(65);
    const auto set = synthetic_set(rng, 8, 2000);
    MetakConfig c;
    c.max_k = 8;
    c.seed = 5;
    TrainOptions o;
    o.steps = 5000;
    o.eval_every = 1000;
    const auto a = train_metak(set, c, o);
    const auto b = train_metak(set, c, o);
    EXPECT_EQ(a.model, b.model);
    EXPECT_LT(a.loss_curve.back().loss, a.loss_curve.front().loss);
    EXPECT_EQ(a.loss_curve.back().step, 5000u);
}

TEST(Checkpoint, RoundTrip) {
    const auto dir = temp_dir("metak");
    Rng rng(66);
    for (bool standardize : {false, true}) {
        MetakConfig c;
        c.max_k = 16;
        c.hidden = 8;
        c.standardize = standardize;
        c.mask = FeatureMask::kNoCounts;
        c.activation = Activation::kTanh;
        c.seed = 77;
        const auto set = synthetic_set(rng, 16, 100);
        TrainOptions o;
        o.steps = 20;
        const auto model = train_metak(set, c, o).model;
        save_metak(model, dir / "a.metak");
        const auto back = load_metak(dir / "a.metak");
        EXPECT_EQ(back.config.max_k, 16u);
        EXPECT_EQ(back.config.hidden, 8u);
        EXPECT_EQ(back.config.mask, FeatureMask::kNoCounts);
        EXPECT_EQ(back.config.activation, Activation::kTanh);
        EXPECT_EQ(back.config.standardize, standardize);
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            EXPECT_EQ(back.params.flat()[i], static_cast<double>(static_cast<float>(model.params.flat()[i])));
        }
        save_metak(back, dir / "b.metak");
        EXPECT_EQ(read_file(dir / "a.metak"), read_file(dir / "b.metak"));
        EXPECT_EQ(load_metak(dir / "b.metak"), back);
    }
}

TEST(Checkpoint, CorruptionIsDetected) {
    const auto dir = temp_dir("metak_bad");
    MetakConfig c;
    c.max_k = 4;
    save_metak(MetakModel::init(c), dir / "ok.metak");
    const auto bytes = read_file(dir / "ok.metak");
    auto expect_corrupt = [&](const std::string& data) {
        std::ofstream(dir / "x.metak", std::ios::binary) << data;
        try {
            load_metak(dir / "x.metak");
            ADD_FAILURE();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::kCorrupt);
        }
    };
    expect_corrupt("X" + bytes.substr(1));
    expect_corrupt(bytes.substr(0, bytes.size() - 4));
    expect_corrupt(bytes + "abcd");
    std::string wrong_s = bytes;
    wrong_s.replace(wrong_s.find("\nS 4\n"), 5, "\nS 5\n");
    expect_corrupt(wrong_s);
}

}  // namespace
}  // namespace aknn
