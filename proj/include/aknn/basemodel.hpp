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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aknn/datastore.hpp"
#include "aknn/knn.hpp"

namespace aknn {

inline constexpr TokenId kBos = 0;  // also pads windows before the sentence start
inline constexpr TokenId kEos = 1;  // ends every target; pads source windows past the end
inline constexpr TokenId kFirstContentToken = 2;

struct SentencePair {
    std::vector<TokenId> source;
    std::vector<TokenId> target;  // ends with kEos

    friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

enum class Split { kTrain, kDev, kTest };

std::string_view to_string(Split split);

struct Corpus {
    std::vector<SentencePair> pairs;
    Split split = Split::kTrain;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
    /// Number of target tokens, i.e. the number of datastore entries the corpus yields.
    std::size_t target_tokens() const;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

/**
 * Parameters of one synthetic translation domain.
 *
 * Source sentences walk a first-order chain over the token range
 * [source_lo, source_hi): with probability `successor_prob` the next token is
 * the fixed successor of the previous one; otherwise, with probability
 * `general_rate`, it is a uniform draw from the whole content vocabulary, and
 * failing that a Zipf draw over a seeded permutation of the range. Each source
 * token is translated one-for-one. A shared "general" table (from
 * `world_seed`) gives the default translation; a seeded `override_rate`
 * fraction of the domain's own tokens use a domain-specific translation
 * instead. With probability `noise_rate` a target token is replaced by one of
 * the domain's most frequent target tokens.
 */
struct DomainSpec {
    std::string name = "a";
    std::uint32_t vocab_size = 1024;
    TokenId source_lo = 2;
    TokenId source_hi = 802;
    double zipf = 1.0;
    double successor_prob = 0.5;
    double general_rate = 0.0;
    double override_rate = 0.5;
    double noise_rate = 0.05;
    std::size_t n_distractors = 4;
    std::size_t min_len = 6;
    std::size_t max_len = 12;
    std::uint64_t world_seed = 0;
    std::uint64_t seed = 0;
};

void validate(const DomainSpec& spec);

/// Conditional tables materialized from a DomainSpec.
class DomainTables {
  public:
    explicit DomainTables(const DomainSpec& spec);

    const DomainSpec& spec() const { return spec_; }
    /// Source tokens in Zipf rank order and their unigram probabilities.
    std::span<const TokenId> source_ranked() const { return ranked_; }
    std::span<const double> source_weights() const { return weights_; }
    /// Fixed successor of a domain token (or of kBos); nullopt for other tokens.
    std::optional<TokenId> successor(TokenId prev) const;
    /// Noise-free translation of a source token (the general one outside the domain range).
    TokenId translation(TokenId source) const;
    std::span<const TokenId> distractors() const { return distractors_; }
    /// p(target | source token), including the noise component.
    Distribution target_distribution(TokenId source) const;

  private:
    DomainSpec spec_;
    std::vector<TokenId> ranked_;
    std::vector<double> weights_;
    std::unordered_map<TokenId, TokenId> successor_;
    std::unordered_map<TokenId, TokenId> translation_;
    std::vector<TokenId> general_;
    std::vector<TokenId> distractors_;
};

/// The shared default translation, indexed by token: a seeded permutation of
/// the content tokens, with kBos and kEos mapped to themselves.
std::vector<TokenId> general_translation(std::uint32_t vocab_size, std::uint64_t world_seed);

/// Deterministic in (spec, n_pairs, split, seed).
Corpus gen_corpus(const DomainSpec& spec, std::size_t n_pairs, Split split, std::uint64_t seed);

/// One sentence pair per line: space-separated source ids, a tab, target ids.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path, Split split, std::uint32_t vocab_size);

/// Token at position `pos` of `source`, padded with kBos before and kEos after.
TokenId source_at(std::span<const TokenId> source, std::ptrdiff_t pos);

/**
 * Fixed random-projection context encoder. The vector for decoding position
 * t = prefix.size() is the sum of per-slot Gaussian token embeddings for the
 * source tokens at t, t-1, ..., t-w+1 and the prefix tokens t-1, ..., t-w.
 * Source slot j is scaled by source_scale * 2^-j and prefix slot j by 2^-j,
 * so the aligned source token dominates.
 */
class ToyEncoder {
  public:
    ToyEncoder(std::uint32_t vocab_size, std::uint32_t dim, std::size_t window, std::uint64_t seed,
               double source_scale = 1.0);

    std::uint32_t vocab_size() const { return vocab_size_; }
    std::uint32_t dim() const { return dim_; }
    std::size_t window() const { return window_; }
    double source_scale() const { return source_scale_; }

    void encode(std::span<const TokenId> source, std::span<const TokenId> prefix, std::span<float> out) const;
    std::vector<float> encode(std::span<const TokenId> source, std::span<const TokenId> prefix) const;

  private:
    std::span<const float> embedding(std::size_t slot, TokenId token) const;

    std::uint32_t vocab_size_;
    std::uint32_t dim_;
    std::size_t window_;
    double source_scale_;
    std::vector<float> table_;  // [slot][token][dim]
};

/// Which tokens a count model conditions on.
struct CountWindow {
    std::size_t source = 1;  // aligned source token and the ones before it
    std::size_t prefix = 0;  // most recent target tokens
};

/// Additively smoothed conditional frequency model p(y_t | context window).
class CountModel {
  public:
    CountModel(std::uint32_t vocab_size, double smoothing, CountWindow window);

    void add(std::span<const TokenId> source, std::span<const TokenId> prefix, TokenId next);
    std::uint32_t vocab_size() const { return vocab_size_; }
    double smoothing() const { return smoothing_; }
    CountWindow window() const { return window_; }

    void next_token_dist(std::span<const TokenId> source, std::span<const TokenId> prefix, std::span<double> out) const;
    double prob(std::span<const TokenId> source, std::span<const TokenId> prefix, TokenId token) const;

  private:
    struct Row {
        std::unordered_map<TokenId, double> counts;
        double total = 0.0;
    };
    std::uint64_t context_key(std::span<const TokenId> source, std::span<const TokenId> prefix) const;
    const Row* find(std::span<const TokenId> source, std::span<const TokenId> prefix) const;

    std::uint32_t vocab_size_;
    double smoothing_;
    CountWindow window_;
    std::unordered_map<std::uint64_t, Row> rows_;
};

/// Counts every target token of `corpus` under `window`. Throws on an empty corpus.
CountModel fit_count_model(const Corpus& corpus, double smoothing, std::uint32_t vocab_size,
                           CountWindow window = {});

/// Context encoder plus next-token distribution: what the retrieval
/// machinery needs from a translation model.
class BaseModel {
  public:
    virtual ~BaseModel() = default;

    virtual std::uint32_t vocab_size() const = 0;
    virtual std::uint32_t context_dim() const = 0;
    virtual void encode_context(std::span<const TokenId> source, std::span<const TokenId> prefix,
                                std::span<float> out) const = 0;
    virtual void next_token_dist(std::span<const TokenId> source, std::span<const TokenId> prefix,
                                 std::span<double> out) const = 0;
};

class ToyBaseModel final : public BaseModel {
  public:
    ToyBaseModel(ToyEncoder encoder, CountModel counts);

    std::uint32_t vocab_size() const override { return counts_.vocab_size(); }
    std::uint32_t context_dim() const override { return encoder_.dim(); }
    void encode_context(std::span<const TokenId> source, std::span<const TokenId> prefix,
                        std::span<float> out) const override {
        encoder_.encode(source, prefix, out);
    }
    void next_token_dist(std::span<const TokenId> source, std::span<const TokenId> prefix,
                         std::span<double> out) const override {
        counts_.next_token_dist(source, prefix, out);
    }

    const ToyEncoder& encoder() const { return encoder_; }
    const CountModel& counts() const { return counts_; }

  private:
    ToyEncoder encoder_;
    CountModel counts_;
};

/// One entry per target token: key = encoder context, value = the token.
Datastore build_datastore(const BaseModel& model, const Corpus& corpus);

}  // namespace aknn
