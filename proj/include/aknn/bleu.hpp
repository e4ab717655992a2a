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

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "aknn/datastore.hpp"

namespace aknn {

struct BleuResult {
    double bleu = 0.0;  // 0..100
    std::array<double, 4> precisions{};
    double brevity_penalty = 0.0;
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;
};

/// Corpus BLEU-4 over token-id sequences: clipped n-gram counts summed over
/// the corpus, geometric mean of the four precisions, brevity penalty, no
/// smoothing. A trailing EOS on either side is ignored.
BleuResult corpus_bleu(std::span<const std::vector<TokenId>> hypotheses,
                       std::span<const std::vector<TokenId>> references);

/// Share of reference positions whose hypothesis token matches in place,
/// over the longer of the two lengths per sentence.
double positional_accuracy(std::span<const std::vector<TokenId>> hypotheses,
                           std::span<const std::vector<TokenId>> references);

}  // namespace aknn
