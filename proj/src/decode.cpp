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

#include "aknn/decode.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aknn/util.hpp"

namespace aknn {

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::kBase:
            return "base";
        case Variant::kVanilla:
            return "vanilla";
        case Variant::kUniform:
            return "uniform";
        case Variant::kAdaptive:
            return "adaptive";
    }
    return "?";
}

Variant parse_variant(std::string_view s) {
    for (Variant v : {Variant::kBase, Variant::kVanilla, Variant::kUniform, Variant::kAdaptive}) {
        if (s == to_string(v)) return v;
    }
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("unknown variant '{}' (expected base, vanilla, uniform or adaptive)", s));
}

Retriever::Retriever(const Datastore& ds, const IvfIndex* index, std::size_t nprobe, Metric metric)
    : ds_(&ds), index_(index), nprobe_(nprobe), metric_(metric) {
    if (index_) {
        index_->check_compatible(ds);
        AKNN_THROW_IF_NOT(nprobe_ >= 1 && nprobe_ <= index_->n_centroids(), kInvalidArgument,
                          fmt::format("nprobe {} outside [1, {}]", nprobe_, index_->n_centroids()));
        if (nprobe_ == index_->n_centroids()) index_ = nullptr;  // full probe is exact search
    }
}

NeighborList Retriever::probe(std::span<const float> query, std::size_t k) const {
    if (!index_) return exact_search(*ds_, query, k, metric_);
    return index_->search(*ds_, query, k, nprobe_, metric_);
}

NeighborList Retriever::search(std::span<const float> query, std::size_t k) const {
    auto result = probe(query, k);
    AKNN_THROW_IF_NOT(result.size() == k, kOutOfRange,
                      fmt::format("retrieval found {} of {} requested neighbors; raise nprobe", result.size(), k));
    return result;
}

std::vector<NeighborList> Retriever::search_batch(std::span<const float> queries, std::size_t k) const {
    const std::size_t dim = ds_->dim();
    AKNN_THROW_IF_NOT(queries.size() % dim == 0, kDimensionMismatch,
                      fmt::format("query block of {} floats is not a multiple of dim {}", queries.size(), dim));
    if (!index_) return exact_search_batch(*ds_, queries, k, metric_);
    std::vector<NeighborList> out;
    out.reserve(queries.size() / dim);
    for (std::size_t i = 0; i < queries.size(); i += dim) out.push_back(search(queries.subspan(i, dim), k));
    return out;
}

NeighborList Retriever::search_excluding(std::span<const float> query, std::size_t k, std::uint64_t exclude) const {
    AKNN_THROW_IF_NOT(k < ds_->size(), kOutOfRange,
                      fmt::format("k = {} leaves no room to exclude an entry from {}", k, ds_->size()));
    auto result = probe(query, k + 1);
    auto it = std::find_if(result.begin(), result.end(), [&](const Neighbor& n) { return n.index == exclude; });
    if (it != result.end()) {
        result.erase(it);
    } else if (result.size() > k) {
        result.pop_back();
    }
    AKNN_THROW_IF_NOT(result.size() == k, kOutOfRange,
                      fmt::format("retrieval found {} of {} requested neighbors; raise nprobe", result.size(), k));
    return result;
}

void validate(const PredictorConfig& cfg) {
    AKNN_THROW_IF_NOT(cfg.temperature > 0.0 && std::isfinite(cfg.temperature), kInvalidArgument,
                      "temperature must be > 0");
    if (cfg.variant == Variant::kBase) return;
    AKNN_THROW_IF_NOT(cfg.k >= 1, kInvalidArgument, "k must be >= 1");
    if (cfg.variant == Variant::kVanilla) {
        validate(VanillaConfig{cfg.k, cfg.temperature, cfg.lambda});
    } else {
        KChoices check(cfg.k);
    }
}

Distribution combine(const PredictorConfig& cfg, const MetakModel* metak, std::span<const double> base_dist,
                     std::span<const Neighbor> neighbors) {
    switch (cfg.variant) {
        case Variant::kBase:
            return Distribution(base_dist.begin(), base_dist.end());
        case Variant::kVanilla:
            return vanilla_predict(base_dist, neighbors, VanillaConfig{cfg.k, cfg.temperature, cfg.lambda});
        case Variant::kUniform:
            AKNN_THROW_IF_NOT(neighbors.size() >= cfg.k, kShapeMismatch,
                              fmt::format("uniform needs {} neighbors, got {}", cfg.k, neighbors.size()));
            return uniform_predict(base_dist, neighbors.first(cfg.k), cfg.k, cfg.temperature);
        case Variant::kAdaptive: {
            AKNN_THROW_IF_NOT(metak != nullptr, kInvalidArgument, "adaptive variant needs a Meta-k model");
            AKNN_THROW_IF_NOT(metak->config.max_k == cfg.k, kShapeMismatch,
                              fmt::format("checkpoint K = {} but configured K = {}", metak->config.max_k, cfg.k));
            AKNN_THROW_IF_NOT(neighbors.size() >= cfg.k, kShapeMismatch,
                              fmt::format("adaptive needs {} neighbors, got {}", cfg.k, neighbors.size()));
            const auto top = neighbors.first(cfg.k);
            const auto p_meta = metak_forward(*metak, extract_features(top, cfg.k, metak->config.mask));
            return aggregate(p_meta, top, base_dist, cfg.temperature);
        }
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown variant");
}

Predictor::Predictor(const BaseModel& base, const Retriever* retriever, PredictorConfig cfg, const MetakModel* metak)
    : base_(&base), retriever_(retriever), cfg_(cfg), metak_(metak) {
    validate(cfg_);
    if (cfg_.variant == Variant::kBase) return;
    AKNN_THROW_IF_NOT(retriever_ != nullptr, kInvalidArgument,
                      fmt::format("variant {} needs a datastore", to_string(cfg_.variant)));
    AKNN_THROW_IF_NOT(retriever_->datastore().dim() == base.context_dim(), kDimensionMismatch,
                      fmt::format("datastore dim {} but encoder dim {}", retriever_->datastore().dim(),
                                  base.context_dim()));
    AKNN_THROW_IF_NOT(retriever_->datastore().vocab_size() == base.vocab_size(), kShapeMismatch,
                      fmt::format("datastore vocabulary {} but model vocabulary {}",
                                  retriever_->datastore().vocab_size(), base.vocab_size()));
    if (cfg_.variant == Variant::kAdaptive) {
        AKNN_THROW_IF_NOT(metak_ != nullptr, kInvalidArgument, "adaptive variant needs a Meta-k checkpoint");
        AKNN_THROW_IF_NOT(metak_->config.max_k == cfg_.k, kShapeMismatch,
                          fmt::format("checkpoint K = {} but configured K = {}", metak_->config.max_k, cfg_.k));
    }
}

Distribution Predictor::predict(std::span<const TokenId> source, std::span<const TokenId> prefix) const {
    const DecodeContext ctx{source, prefix};
    return std::move(predict_batch({&ctx, 1}).front());
}

std::vector<Distribution> Predictor::predict_batch(std::span<const DecodeContext> contexts) const {
    const std::size_t n = contexts.size();
    std::vector<Distribution> base(n, Distribution(vocab_size()));
    for (std::size_t i = 0; i < n; ++i) base_->next_token_dist(contexts[i].source, contexts[i].prefix, base[i]);
    if (cfg_.variant == Variant::kBase) {
        if (check_) {
            for (const auto& p : base) {
                AKNN_THROW_IF_NOT(is_distribution(p), kNumeric, "base model emitted an invalid distribution");
            }
            checked_ += n;
        }
        return base;
    }
    const std::size_t dim = base_->context_dim();
    std::vector<float> queries(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        base_->encode_context(contexts[i].source, contexts[i].prefix, std::span<float>(queries).subspan(i * dim, dim));
    }
    const auto neighbors = retriever_->search_batch(queries, cfg_.k);
    std::vector<Distribution> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(combine(cfg_, metak_, base[i], neighbors[i]));
        if (check_) {
            AKNN_THROW_IF_NOT(is_distribution(out.back()), kNumeric,
                              fmt::format("{} emitted an invalid distribution", to_string(cfg_.variant)));
            ++checked_;
        }
    }
    return out;
}

std::size_t max_decode_length(const DecodeOptions& opts, std::size_t source_len) {
    return std::max<std::size_t>(1, opts.max_len_a * source_len + opts.max_len_b);
}

std::vector<TokenId> greedy_decode(const Predictor& predictor, std::span<const TokenId> source, std::size_t max_len) {
    std::vector<TokenId> out;
    while (out.size() + 1 < max_len) {
        const auto p = predictor.predict(source, out);
        const auto tok = static_cast<TokenId>(argmax(p));
        if (tok == kEos) break;
        out.push_back(tok);
    }
    return out;
}

namespace {

struct Hypothesis {
    std::vector<TokenId> tokens;
    double score = 0.0;  // sum of log probabilities
};

struct Candidate {
    std::size_t parent;
    TokenId token;
    double score;
};

double normalized(double score, std::size_t length, double penalty) {
    return score / std::pow(static_cast<double>(length), penalty);
}

// Best `n` tokens by probability, ties to the lower id.
std::vector<TokenId> top_tokens(const Distribution& p, std::size_t n) {
    std::vector<TokenId> ids(p.size());
    std::iota(ids.begin(), ids.end(), TokenId{0});
    n = std::min(n, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(),
                      [&](TokenId a, TokenId b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
    ids.resize(n);
    return ids;
}

}  // namespace

std::vector<TokenId> beam_decode(const Predictor& predictor, std::span<const TokenId> source, std::size_t beam,
                                 double length_penalty, std::size_t max_len) {
    AKNN_THROW_IF_NOT(beam >= 1, kInvalidArgument, "beam width must be >= 1");
    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> finished;
    std::vector<double> finished_scores;
    for (std::size_t step = 0; step < max_len && finished.size() < beam && !live.empty(); ++step) {
        std::vector<DecodeContext> ctx;
        for (const auto& h : live) ctx.push_back({source, h.tokens});
        const auto dists = predictor.predict_batch(ctx);
        const bool last = step + 1 == max_len;
        std::vector<Candidate> cands;
        for (std::size_t h = 0; h < live.size(); ++h) {
            if (last) {
                cands.push_back({h, kEos, live[h].score + std::log(dists[h][kEos])});
                continue;
            }
            for (TokenId tok : top_tokens(dists[h], 2 * beam)) {
                cands.push_back({h, tok, live[h].score + std::log(dists[h][tok])});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            return a.score > b.score;
        });
        std::vector<Hypothesis> next;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const auto& c = cands[i];
            if (c.token == kEos) {
                if ((i < beam || last) && finished.size() < beam) {
                    finished.push_back({live[c.parent].tokens, c.score});
                    finished_scores.push_back(normalized(c.score, live[c.parent].tokens.size() + 1, length_penalty));
                }
            } else if (next.size() < beam) {
                Hypothesis h{live[c.parent].tokens, c.score};
                h.tokens.push_back(c.token);
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }
    if (finished.empty()) return {};
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i) {
        if (finished_scores[i] > finished_scores[best]) best = i;
    }
    return finished[best].tokens;
}

std::vector<std::vector<TokenId>> decode_corpus(const Predictor& predictor, const Corpus& corpus,
                                                const DecodeOptions& opts) {
    std::vector<std::vector<TokenId>> out(corpus.size());
    if (opts.beam > 0) {
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            const auto& src = corpus.pairs[i].source;
            out[i] = beam_decode(predictor, src, opts.beam, opts.length_penalty, max_decode_length(opts, src.size()));
        }
        return out;
    }
    const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
    for (std::size_t start = 0; start < corpus.size(); start += bs) {
        const std::size_t end = std::min(corpus.size(), start + bs);
        std::vector<std::size_t> active;
        for (std::size_t i = start; i < end; ++i) active.push_back(i);
        auto room = [&](std::size_t i) {
            return out[i].size() + 1 < max_decode_length(opts, corpus.pairs[i].source.size());
        };
        std::erase_if(active, [&](std::size_t i) { return !room(i); });
        while (!active.empty()) {
            std::vector<DecodeContext> ctx;
            for (std::size_t i : active) ctx.push_back({corpus.pairs[i].source, out[i]});
            const auto dists = predictor.predict_batch(ctx);
            std::vector<std::size_t> still;
            for (std::size_t j = 0; j < active.size(); ++j) {
                const std::size_t i = active[j];
                const auto tok = static_cast<TokenId>(argmax(dists[j]));
                if (tok == kEos) continue;
                out[i].push_back(tok);
                if (room(i)) still.push_back(i);
            }
            active = std::move(still);
        }
    }
    return out;
}

AccuracyReport teacher_forced_accuracy(const Predictor& predictor, const Corpus& corpus) {
    AccuracyReport report;
    for (const auto& pair : corpus.pairs) {
        const std::span<const TokenId> target = pair.target;
        std::vector<DecodeContext> ctx;
        for (std::size_t t = 0; t < target.size(); ++t) ctx.push_back({pair.source, target.first(t)});
        const auto dists = predictor.predict_batch(ctx);
        for (std::size_t t = 0; t < target.size(); ++t) {
            report.correct += argmax(dists[t]) == target[t];
            ++report.total;
        }
    }
    return report;
}

}  // namespace aknn
