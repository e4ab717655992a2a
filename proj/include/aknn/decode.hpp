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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "aknn/basemodel.hpp"
#include "aknn/datastore.hpp"
#include "aknn/ivf.hpp"
#include "aknn/knn.hpp"
#include "aknn/metak.hpp"

namespace aknn {

enum class Variant { kBase, kVanilla, kUniform, kAdaptive };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

/// Neighbor lookup over a datastore, through an IVF index when one is given
/// and nprobe is below its list count, exhaustively otherwise.
class Retriever {
  public:
    Retriever(const Datastore& ds, const IvfIndex* index = nullptr, std::size_t nprobe = 0,
              Metric metric = Metric::kSquaredL2);

    const Datastore& datastore() const { return *ds_; }
    Metric metric() const { return metric_; }
    bool uses_index() const { return index_ != nullptr; }

    /// Exactly k neighbors, or kOutOfRange if the probed lists hold fewer.
    NeighborList search(std::span<const float> query, std::size_t k) const;
    /// Row-major queries; one list per row.
    std::vector<NeighborList> search_batch(std::span<const float> queries, std::size_t k) const;
    /// As search(), but entry `exclude` never appears in the result.
    NeighborList search_excluding(std::span<const float> query, std::size_t k, std::uint64_t exclude) const;

  private:
    NeighborList probe(std::span<const float> query, std::size_t k) const;

    const Datastore* ds_;
    const IvfIndex* index_;
    std::size_t nprobe_;
    Metric metric_;
};

struct PredictorConfig {
    Variant variant = Variant::kBase;
    /// Neighbors retrieved: the fixed k for vanilla, the maximum K for uniform and adaptive.
    std::size_t k = 8;
    double temperature = 2.0;
    /// Vanilla only.
    double lambda = 0.7;
};

void validate(const PredictorConfig& cfg);

/// Next-token distribution of one variant from precomputed inputs.
/// `neighbors` must hold at least cfg.k entries; only the first cfg.k are used.
Distribution combine(const PredictorConfig& cfg, const MetakModel* metak, std::span<const double> base_dist,
                     std::span<const Neighbor> neighbors);

struct DecodeContext {
    std::span<const TokenId> source;
    std::span<const TokenId> prefix;
};

/// Base model plus (for the retrieval variants) a retriever and, for the
/// adaptive variant, a Meta-k model whose max_k equals cfg.k.
class Predictor {
  public:
    Predictor(const BaseModel& base, const Retriever* retriever, PredictorConfig cfg,
              const MetakModel* metak = nullptr);

    const PredictorConfig& config() const { return cfg_; }
    std::uint32_t vocab_size() const { return base_->vocab_size(); }

    /// Validate every emitted distribution (kNumeric on failure) and count the checks.
    void set_check_distributions(bool on) { check_ = on; }
    std::uint64_t checked_steps() const { return checked_; }

    Distribution predict(std::span<const TokenId> source, std::span<const TokenId> prefix) const;
    /// One distribution per context; retrieval runs as a single batch.
    std::vector<Distribution> predict_batch(std::span<const DecodeContext> contexts) const;

  private:
    const BaseModel* base_;
    const Retriever* retriever_;
    PredictorConfig cfg_;
    const MetakModel* metak_;
    bool check_ = false;
    mutable std::uint64_t checked_ = 0;
};

struct DecodeOptions {
    /// 0 selects greedy search; otherwise beam search with this width.
    std::size_t beam = 0;
    double length_penalty = 0.6;
    /// Hypotheses stop after max_len_a * |source| + max_len_b tokens (EOS included).
    std::size_t max_len_a = 2;
    std::size_t max_len_b = 10;
    /// Sentences decoded together (greedy only); does not change the output.
    std::size_t batch_size = 1;
};

std::size_t max_decode_length(const DecodeOptions& opts, std::size_t source_len);

/// Argmax decoding. At most max_len - 1 tokens are emitted (EOS is implied
/// at max_len). The result excludes the final EOS.
std::vector<TokenId> greedy_decode(const Predictor& predictor, std::span<const TokenId> source,
                                   std::size_t max_len);

/// Beam search scored by sum(log p) / length^length_penalty (length counts EOS).
/// At each step the 2*beam best expansions are ranked; EOS expansions among the
/// top `beam` are finished, and the best `beam` non-EOS expansions stay live.
/// Search ends once `beam` hypotheses are finished. Width 1 equals greedy.
std::vector<TokenId> beam_decode(const Predictor& predictor, std::span<const TokenId> source, std::size_t beam,
                                 double length_penalty, std::size_t max_len);

std::vector<std::vector<TokenId>> decode_corpus(const Predictor& predictor, const Corpus& corpus,
                                                const DecodeOptions& opts);

struct AccuracyReport {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Fraction of gold target tokens (EOS included) that are the argmax under
/// the gold prefix.
AccuracyReport teacher_forced_accuracy(const Predictor& predictor, const Corpus& corpus);

}  // namespace aknn
