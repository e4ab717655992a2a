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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aknn/datastore.hpp"
#include "aknn/kchoices.hpp"
#include "aknn/knn.hpp"

namespace aknn {

/// Which retrieval-feature blocks reach the network. Masked blocks are zeroed.
enum class FeatureMask { kFull, kNoCounts, kNoDistances, kNone };

enum class Activation { kRelu, kTanh };

std::string_view to_string(FeatureMask mask);
std::string_view to_string(Activation act);
FeatureMask parse_feature_mask(std::string_view s);
Activation parse_activation(std::string_view s);

/// Retrieval features for the K nearest neighbors: their distances and, for
/// each prefix of length i, the number of distinct token values among them.
struct MetaFeatures {
    std::vector<double> distances;
    std::vector<double> counts;

    /// [distances; counts], length 2K.
    std::vector<double> concat() const;
};

/// Requires exactly `max_k` neighbors (kShapeMismatch otherwise).
MetaFeatures extract_features(std::span<const Neighbor> neighbors, std::size_t max_k,
                              FeatureMask mask = FeatureMask::kFull);

/// Two-layer feed-forward weights, stored contiguously as W1 | b1 | W2 | b2
/// (row-major) so optimizers and finite differences can treat them as one vector.
class MetakParams {
  public:
    MetakParams() = default;
    MetakParams(std::size_t inputs, std::size_t hidden, std::size_t outputs);

    /// Uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)) per matrix; zero biases.
    static MetakParams glorot(std::size_t inputs, std::size_t hidden, std::size_t outputs, std::uint64_t seed);

    std::size_t inputs() const { return inputs_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t outputs() const { return outputs_; }
    std::size_t size() const { return data_.size(); }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    std::span<double> w1() { return {data_.data(), hidden_ * inputs_}; }
    std::span<double> b1() { return {data_.data() + b1_offset(), hidden_}; }
    std::span<double> w2() { return {data_.data() + w2_offset(), outputs_ * hidden_}; }
    std::span<double> b2() { return {data_.data() + b2_offset(), outputs_}; }
    std::span<const double> w1() const { return {data_.data(), hidden_ * inputs_}; }
    std::span<const double> b1() const { return {data_.data() + b1_offset(), hidden_}; }
    std::span<const double> w2() const { return {data_.data() + w2_offset(), outputs_ * hidden_}; }
    std::span<const double> b2() const { return {data_.data() + b2_offset(), outputs_}; }

    friend bool operator==(const MetakParams&, const MetakParams&) = default;

  private:
    std::size_t b1_offset() const { return hidden_ * inputs_; }
    std::size_t w2_offset() const { return b1_offset() + hidden_; }
    std::size_t b2_offset() const { return w2_offset() + outputs_ * hidden_; }

    std::size_t inputs_ = 0;
    std::size_t hidden_ = 0;
    std::size_t outputs_ = 0;
    std::vector<double> data_;
};

struct MetakConfig {
    std::size_t max_k = 8;
    std::size_t hidden = 32;
    Activation activation = Activation::kRelu;
    FeatureMask mask = FeatureMask::kFull;
    /// Standardize each input feature with training-set mean and deviation.
    bool standardize = false;
    std::uint64_t seed = 0;

    friend bool operator==(const MetakConfig&, const MetakConfig&) = default;
};

/// A Meta-k network: configuration, weights, and optional input standardization.
struct MetakModel {
    MetakConfig config;
    MetakParams params;
    std::vector<double> feature_mean;   // empty unless config.standardize
    std::vector<double> feature_scale;  // 1 / stddev per feature

    /// Seeded initialization for the configured shape.
    static MetakModel init(const MetakConfig& config);

    KChoices choices() const { return KChoices(config.max_k); }
    std::size_t input_size() const { return 2 * config.max_k; }
    std::size_t parameter_count() const { return params.size(); }

    friend bool operator==(const MetakModel&, const MetakModel&) = default;
};

/// softmax(W2 act(W1 x + b1) + b2) over the k-choice set, where x is the raw
/// feature vector after optional standardization.
Distribution metak_forward(const MetakModel& model, std::span<const double> features);
Distribution metak_forward(const MetakModel& model, const MetaFeatures& features);

/// Mixture of the base distribution (k = 0) and the kNN distributions over the
/// first k neighbors for every other k in the choice set, weighted by p_meta.
/// `neighbors` must hold exactly K entries, where |p_meta| = log2(K) + 2.
Distribution aggregate(std::span<const double> p_meta, std::span<const Neighbor> neighbors,
                       std::span<const double> base_dist, double temperature);

/// One supervised token for Meta-k training.
struct MetakSample {
    MetaFeatures features;
    NeighborList neighbors;
    Distribution base_dist;
    TokenId gold = 0;
};

/// Training sample reduced to what the loss needs: the network input and the
/// probability each mixture component assigns to the gold token.
struct PreparedSample {
    std::vector<double> input;       // 2K raw features (mask applied)
    std::vector<double> gold_probs;  // |S| entries; [0] is the base model
    std::size_t group = 0;           // sentence id used for batching
};

PreparedSample prepare_sample(std::span<const double> features, std::span<const Neighbor> neighbors,
                              double base_gold_prob, TokenId gold, double temperature, std::size_t group = 0);
PreparedSample prepare_sample(const MetakSample& sample, double temperature, std::size_t group = 0);

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as MetakParams::flat()
    std::size_t clamped = 0;   // samples whose mixture probability hit the 1e-12 floor
};

/// Mean negative log-likelihood of the gold tokens under the aggregated
/// distribution, with its gradient with respect to the network weights.
LossAndGrad loss_and_grad(const MetakModel& model, std::span<const PreparedSample> batch);
LossAndGrad loss_and_grad(const MetakModel& model, std::span<const MetakSample> batch, double temperature);

/// Mean loss only (no gradient).
double mean_loss(const MetakModel& model, std::span<const PreparedSample> samples);

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    AdamState(std::size_t n_params, AdamOptions opts) : options(opts), m(n_params, 0.0), v(n_params, 0.0) {}
};

/// Bias-corrected Adam update in place. Non-finite gradients raise kNumeric
/// and leave both state and params untouched.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

struct TrainOptions {
    std::size_t steps = 5000;
    /// Sentences (sample groups) per mini-batch.
    std::size_t batch_size = 32;
    AdamOptions adam;
    /// Full-training-set loss is recorded every this many steps (and at the end).
    std::size_t eval_every = 250;
};

struct LossPoint {
    std::size_t step;
    double loss;
};

struct TrainResult {
    MetakModel model;
    std::vector<LossPoint> loss_curve;
    std::size_t clamped = 0;
};

/// Shuffled mini-batch Adam on the mean aggregated-distribution NLL. The whole
/// run is a function of the samples, config (including seed) and options.
TrainResult train_metak(std::span<const PreparedSample> train_set, const MetakConfig& config,
                        const TrainOptions& options);

// Text header (one "key value" per line, terminated by "end"), then little-endian
// f32 blocks W1, b1, W2, b2, and the standardization mean/scale when enabled.
void save_metak(const MetakModel& model, const std::filesystem::path& path);
MetakModel load_metak(const std::filesystem::path& path);

}  // namespace aknn
