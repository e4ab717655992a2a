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


#include "aknn/bleu.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "aknn/basemodel.hpp"
#include "aknn/util.hpp"

namespace aknn {

namespace {

std::span<const TokenId> strip_eos(const std::vector<TokenId>& s) {
    std::span<const TokenId> v = s;
    if (!v.empty() && v.back() == kEos) v = v.first(v.size() - 1);
    return v;
}

std::map<std::vector<TokenId>, std::size_t> ngrams(std::span<const TokenId> s, std::size_t n) {
    std::map<std::vector<TokenId>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[std::vector<TokenId>(s.begin() + i, s.begin() + i + n)];
    return counts;
}

void check_lengths(std::size_t hyps, std::size_t refs) {
    AKNN_THROW_IF_NOT(hyps == refs, kShapeMismatch,
                      fmt::format("{} hypotheses but {} references", hyps, refs));
}

}  // namespace

BleuResult corpus_bleu(std::span<const std::vector<TokenId>> hypotheses,
                       std::span<const std::vector<TokenId>> references) {
    check_lengths(hypotheses.size(), references.size());
    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    BleuResult r;
    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        const auto hyp = strip_eos(hypotheses[s]);
        const auto ref = strip_eos(references[s]);
        r.hyp_length += hyp.size();
        r.ref_length += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto h = ngrams(hyp, n);
            const auto g = ngrams(ref, n);
            for (const auto& [gram, count] : h) {
                auto it = g.find(gram);
                if (it != g.end()) matches[n - 1] += std::min(count, it->second);
                totals[n - 1] += count;
            }
        }
    }
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < 4; ++n) {
        r.precisions[n] = totals[n] ? static_cast<double>(matches[n]) / static_cast<double>(totals[n]) : 0.0;
        if (r.precisions[n] == 0.0) {
            zero = true;
        } else {
            log_sum += std::log(r.precisions[n]);
        }
    }
    if (r.hyp_length == 0) {
        r.brevity_penalty = 0.0;
    } else if (r.hyp_length > r.ref_length) {
        r.brevity_penalty = 1.0;
    } else {
        r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
    }
    r.bleu = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
    return r;
}

double positional_accuracy(std::span<const std::vector<TokenId>> hypotheses,
                           std::span<const std::vector<TokenId>> references) {
    check_lengths(hypotheses.size(), references.size());
    std::size_t hit = 0;
    std::size_t total = 0;
    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        const auto hyp = strip_eos(hypotheses[s]);
        const auto ref = strip_eos(references[s]);
        total += std::max(hyp.size(), ref.size());
        for (std::size_t i = 0; i < std::min(hyp.size(), ref.size()); ++i) hit += hyp[i] == ref[i];
    }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

}  // namespace aknn
