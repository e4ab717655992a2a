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

#include "aknn/basemodel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "aknn/util.hpp"

namespace aknn {

namespace {

constexpr std::uint64_t kTagTables = 11;
constexpr std::uint64_t kTagSentences = 12;
constexpr std::uint64_t kTagEncoder = 13;

void shuffle(std::vector<TokenId>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.uniform_index(i)]);
    }
}

}  // namespace

std::string_view to_string(Split split) {
    switch (split) {
        case Split::kTrain:
            return "train";
        case Split::kDev:
            return "dev";
        case Split::kTest:
            return "test";
    }
    return "?";
}

std::size_t Corpus::target_tokens() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.target.size();
    return n;
}

void validate(const DomainSpec& s) {
    AKNN_THROW_IF_NOT(s.vocab_size > kFirstContentToken, kInvalidArgument, "vocab_size must exceed 2");
    AKNN_THROW_IF_NOT(s.source_lo >= kFirstContentToken && s.source_lo < s.source_hi && s.source_hi <= s.vocab_size,
                      kInvalidArgument,
                      fmt::format("source range [{}, {}) must lie within [2, {})", s.source_lo, s.source_hi,
                                  s.vocab_size));
    AKNN_THROW_IF_NOT(s.zipf >= 0.0 && std::isfinite(s.zipf), kInvalidArgument, "zipf exponent must be >= 0");
    for (double p : {s.successor_prob, s.general_rate, s.override_rate, s.noise_rate}) {
        AKNN_THROW_IF_NOT(p >= 0.0 && p <= 1.0, kInvalidArgument, "rates must lie in [0, 1]");
    }
    AKNN_THROW_IF_NOT(s.noise_rate == 0.0 || s.n_distractors >= 1, kInvalidArgument,
                      "noise requires at least one distractor");
    AKNN_THROW_IF_NOT(s.n_distractors <= s.source_hi - s.source_lo, kInvalidArgument,
                      "more distractors than source tokens");
    AKNN_THROW_IF_NOT(s.min_len >= 1 && s.min_len <= s.max_len, kInvalidArgument, "need 1 <= min_len <= max_len");
}

std::vector<TokenId> general_translation(std::uint32_t vocab_size, std::uint64_t world_seed) {
    std::vector<TokenId> perm(vocab_size - kFirstContentToken);
    std::iota(perm.begin(), perm.end(), kFirstContentToken);
    Rng rng(derive_seed(world_seed, kTagTables));
    shuffle(perm, rng);
    std::vector<TokenId> table(vocab_size);
    table[kBos] = kBos;
    table[kEos] = kEos;
    std::copy(perm.begin(), perm.end(), table.begin() + kFirstContentToken);
    return table;
}

DomainTables::DomainTables(const DomainSpec& spec) : spec_(spec) {
    validate(spec_);
    Rng rng(derive_seed(spec_.seed, kTagTables));
    ranked_.resize(spec_.source_hi - spec_.source_lo);
    std::iota(ranked_.begin(), ranked_.end(), spec_.source_lo);
    shuffle(ranked_, rng);

    weights_.resize(ranked_.size());
    double total = 0.0;
    for (std::size_t r = 0; r < weights_.size(); ++r) {
        weights_[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec_.zipf);
        total += weights_[r];
    }
    for (double& w : weights_) w /= total;

    successor_[kBos] = ranked_[rng.categorical(weights_)];
    for (TokenId x : ranked_) successor_[x] = ranked_[rng.categorical(weights_)];

    general_ = general_translation(spec_.vocab_size, spec_.world_seed);
    const std::uint64_t n_content = spec_.vocab_size - kFirstContentToken;
    for (TokenId x : ranked_) {
        if (rng.uniform() < spec_.override_rate) {
            translation_[x] = static_cast<TokenId>(kFirstContentToken + rng.uniform_index(n_content));
        } else {
            translation_[x] = general_[x];
        }
    }
    for (std::size_t i = 0; i < spec_.n_distractors; ++i) distractors_.push_back(translation_.at(ranked_[i]));
}

std::optional<TokenId> DomainTables::successor(TokenId prev) const {
    auto it = successor_.find(prev);
    if (it == successor_.end()) return std::nullopt;
    return it->second;
}

TokenId DomainTables::translation(TokenId source) const {
    AKNN_THROW_IF_NOT(source >= kFirstContentToken && source < spec_.vocab_size, kOutOfRange,
                      fmt::format("token {} is not a content token", source));
    auto it = translation_.find(source);
    return it == translation_.end() ? general_[source] : it->second;
}

Distribution DomainTables::target_distribution(TokenId source) const {
    Distribution p(spec_.vocab_size, 0.0);
    p[translation(source)] += 1.0 - spec_.noise_rate;
    for (TokenId d : distractors_) p[d] += spec_.noise_rate / static_cast<double>(distractors_.size());
    return p;
}

Corpus gen_corpus(const DomainSpec& spec, std::size_t n_pairs, Split split, std::uint64_t seed) {
    Corpus corpus;
    corpus.split = split;
    if (n_pairs == 0) return corpus;
    const DomainTables tables(spec);
    Rng rng(derive_seed(derive_seed(seed, kTagSentences), static_cast<std::uint64_t>(split)));
    const auto ranked = tables.source_ranked();
    const auto weights = tables.source_weights();
    const auto distractors = tables.distractors();
    const std::uint64_t n_content = spec.vocab_size - kFirstContentToken;
    corpus.pairs.reserve(n_pairs);
    for (std::size_t n = 0; n < n_pairs; ++n) {
        const std::size_t len = spec.min_len + rng.uniform_index(spec.max_len - spec.min_len + 1);
        SentencePair pair;
        TokenId prev = kBos;
        for (std::size_t i = 0; i < len; ++i) {
            const auto next = tables.successor(prev);
            if (next && rng.uniform() < spec.successor_prob) {
                prev = *next;
            } else if (rng.uniform() < spec.general_rate) {
                prev = static_cast<TokenId>(kFirstContentToken + rng.uniform_index(n_content));
            } else {
                prev = ranked[rng.categorical(weights)];
            }
            pair.source.push_back(prev);
        }
        for (TokenId x : pair.source) {
            if (rng.uniform() < spec.noise_rate) {
                pair.target.push_back(distractors[rng.uniform_index(distractors.size())]);
            } else {
                pair.target.push_back(tables.translation(x));
            }
        }
        pair.target.push_back(kEos);
        corpus.pairs.push_back(std::move(pair));
    }
    return corpus;
}

namespace {

void write_ids(std::ostream& out, std::span<const TokenId> ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out << ' ';
        out << ids[i];
    }
}

void check_ids(std::span<const TokenId> ids, std::uint32_t vocab_size, const std::filesystem::path& path,
               std::size_t line) {
    for (TokenId t : ids) {
        AKNN_THROW_IF_NOT(t < vocab_size, kOutOfRange,
                          fmt::format("{}:{}: token {} outside vocabulary of size {}", path.string(), line, t,
                                      vocab_size));
    }
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    for (const auto& p : corpus.pairs) {
        write_ids(out, p.source);
        out << '\t';
        write_ids(out, p.target);
        out << '\n';
    }
    out.flush();
    AKNN_THROW_IF_NOT(out.good(), kIo, fmt::format("failed writing {}", path.string()));
}

Corpus read_corpus(const std::filesystem::path& path, Split split, std::uint32_t vocab_size) {
    auto in = io::open_in(path);
    Corpus corpus;
    corpus.split = split;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        AKNN_THROW_IF_NOT(tab != std::string::npos, kCorrupt,
                          fmt::format("{}:{}: expected source<TAB>target", path.string(), lineno));
        SentencePair p;
        try {
            p.source = parse_token_ids(std::string_view(line).substr(0, tab));
            p.target = parse_token_ids(std::string_view(line).substr(tab + 1));
        } catch (const Error& e) {
            throw Error(ErrorCode::kCorrupt, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
        check_ids(p.source, vocab_size, path, lineno);
        check_ids(p.target, vocab_size, path, lineno);
        corpus.pairs.push_back(std::move(p));
    }
    return corpus;
}

TokenId source_at(std::span<const TokenId> source, std::ptrdiff_t pos) {
    if (pos < 0) return kBos;
    if (static_cast<std::size_t>(pos) >= source.size()) return kEos;
    return source[static_cast<std::size_t>(pos)];
}

namespace {

TokenId prefix_at(std::span<const TokenId> prefix, std::size_t back) {
    return back <= prefix.size() ? prefix[prefix.size() - back] : kBos;
}

}  // namespace

ToyEncoder::ToyEncoder(std::uint32_t vocab_size, std::uint32_t dim, std::size_t window, std::uint64_t seed,
                       double source_scale)
    : vocab_size_(vocab_size), dim_(dim), window_(window), source_scale_(source_scale) {
    AKNN_THROW_IF_NOT(vocab_size > kFirstContentToken, kInvalidArgument, "vocab_size must exceed 2");
    AKNN_THROW_IF_NOT(dim >= 1, kInvalidArgument, "encoder dim must be >= 1");
    AKNN_THROW_IF_NOT(window >= 1 && window <= 16, kInvalidArgument, "encoder window must lie in [1, 16]");
    AKNN_THROW_IF_NOT(source_scale > 0.0 && std::isfinite(source_scale), kInvalidArgument,
                      "encoder source scale must be > 0");
    const std::size_t slots = 2 * window_;
    table_.resize(slots * vocab_size_ * dim_);
    Rng rng(derive_seed(seed, kTagEncoder));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (std::size_t slot = 0; slot < slots; ++slot) {
        const bool src = slot < window_;
        const std::size_t offset = src ? slot : slot - window_ + 1;
        const double weight = (src ? source_scale_ : 1.0) * std::ldexp(1.0, -static_cast<int>(offset));
        float* row = table_.data() + slot * vocab_size_ * dim_;
        for (std::size_t i = 0; i < std::size_t{vocab_size_} * dim_; ++i) {
            row[i] = static_cast<float>(rng.normal() * scale * weight);
        }
    }
}

std::span<const float> ToyEncoder::embedding(std::size_t slot, TokenId token) const {
    AKNN_THROW_IF_NOT(token < vocab_size_, kOutOfRange,
                      fmt::format("token {} outside vocabulary of size {}", token, vocab_size_));
    return {table_.data() + (slot * vocab_size_ + token) * dim_, dim_};
}

void ToyEncoder::encode(std::span<const TokenId> source, std::span<const TokenId> prefix,
                        std::span<float> out) const {
    AKNN_THROW_IF_NOT(out.size() == dim_, kDimensionMismatch,
                      fmt::format("output has length {}, encoder dim is {}", out.size(), dim_));
    std::fill(out.begin(), out.end(), 0.0f);
    const auto t = static_cast<std::ptrdiff_t>(prefix.size());
    auto add = [&](std::size_t slot, TokenId token) {
        const auto e = embedding(slot, token);
        for (std::size_t i = 0; i < dim_; ++i) out[i] += e[i];
    };
    for (std::size_t j = 0; j < window_; ++j) add(j, source_at(source, t - static_cast<std::ptrdiff_t>(j)));
    for (std::size_t j = 0; j < window_; ++j) add(window_ + j, prefix_at(prefix, j + 1));
}

std::vector<float> ToyEncoder::encode(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
    std::vector<float> out(dim_);
    encode(source, prefix, out);
    return out;
}

CountModel::CountModel(std::uint32_t vocab_size, double smoothing, CountWindow window)
    : vocab_size_(vocab_size), smoothing_(smoothing), window_(window) {
    AKNN_THROW_IF_NOT(vocab_size >= 1 && vocab_size <= 65536, kInvalidArgument,
                      "count model supports vocabularies of 1 to 65536 tokens");
    AKNN_THROW_IF_NOT(smoothing > 0.0 && std::isfinite(smoothing), kInvalidArgument, "smoothing must be > 0");
    AKNN_THROW_IF_NOT(window.source + window.prefix <= 4, kInvalidArgument,
                      "count model conditions on at most 4 tokens");
}

std::uint64_t CountModel::context_key(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
    // 16 bits per token
    std::uint64_t key = 0;
    const auto t = static_cast<std::ptrdiff_t>(prefix.size());
    for (std::size_t j = 0; j < window_.source; ++j) {
        key = (key << 16) | source_at(source, t - static_cast<std::ptrdiff_t>(j));
    }
    for (std::size_t j = 0; j < window_.prefix; ++j) key = (key << 16) | prefix_at(prefix, j + 1);
    return key;
}

void CountModel::add(std::span<const TokenId> source, std::span<const TokenId> prefix, TokenId next) {
    AKNN_THROW_IF_NOT(next < vocab_size_, kOutOfRange,
                      fmt::format("token {} outside vocabulary of size {}", next, vocab_size_));
    Row& row = rows_[context_key(source, prefix)];
    row.counts[next] += 1.0;
    row.total += 1.0;
}

const CountModel::Row* CountModel::find(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
    auto it = rows_.find(context_key(source, prefix));
    return it == rows_.end() ? nullptr : &it->second;
}

void CountModel::next_token_dist(std::span<const TokenId> source, std::span<const TokenId> prefix,
                                 std::span<double> out) const {
    AKNN_THROW_IF_NOT(out.size() == vocab_size_, kDimensionMismatch,
                      fmt::format("output has length {}, vocabulary is {}", out.size(), vocab_size_));
    const Row* row = find(source, prefix);
    const double total = (row ? row->total : 0.0) + smoothing_ * vocab_size_;
    std::fill(out.begin(), out.end(), smoothing_ / total);
    if (row) {
        for (const auto& [tok, c] : row->counts) out[tok] = (c + smoothing_) / total;
    }
}

double CountModel::prob(std::span<const TokenId> source, std::span<const TokenId> prefix, TokenId token) const {
    AKNN_THROW_IF_NOT(token < vocab_size_, kOutOfRange,
                      fmt::format("token {} outside vocabulary of size {}", token, vocab_size_));
    const Row* row = find(source, prefix);
    if (!row) return 1.0 / vocab_size_;
    auto it = row->counts.find(token);
    const double c = it == row->counts.end() ? 0.0 : it->second;
    return (c + smoothing_) / (row->total + smoothing_ * vocab_size_);
}

CountModel fit_count_model(const Corpus& corpus, double smoothing, std::uint32_t vocab_size, CountWindow window) {
    AKNN_THROW_IF_NOT(!corpus.empty(), kInvalidArgument, "cannot fit a count model on an empty corpus");
    CountModel model(vocab_size, smoothing, window);
    for (const auto& p : corpus.pairs) {
        const std::span<const TokenId> target = p.target;
        for (std::size_t t = 0; t < target.size(); ++t) model.add(p.source, target.first(t), target[t]);
    }
    return model;
}

ToyBaseModel::ToyBaseModel(ToyEncoder encoder, CountModel counts)
    : encoder_(std::move(encoder)), counts_(std::move(counts)) {
    AKNN_THROW_IF_NOT(encoder_.vocab_size() == counts_.vocab_size(), kShapeMismatch,
                      "encoder and count model disagree on vocabulary size");
}

Datastore build_datastore(const BaseModel& model, const Corpus& corpus) {
    DatastoreBuilder builder(model.context_dim(), model.vocab_size());
    std::vector<float> key(model.context_dim());
    for (const auto& p : corpus.pairs) {
        const std::span<const TokenId> target = p.target;
        for (std::size_t t = 0; t < target.size(); ++t) {
            model.encode_context(p.source, target.first(t), key);
            builder.add(key, target[t]);
        }
    }
    return std::move(builder).finish();
}

}  // namespace aknn
