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

#include <span>
#include <vector>

#include "aknn/datastore.hpp"

namespace aknn {

/// Probability vector over a finite support (the vocabulary, or the k-choice set).
using Distribution = std::vector<double>;

/// Non-negative, finite, and summing to 1 within `tol`.
bool is_distribution(std::span<const double> p, double tol = 1e-9);

/// Lowest index attaining the maximum.
std::size_t argmax(std::span<const double> p);

/// Softmax over negative distances, summed per token value and normalized over
/// the retrieved set. Tokens that were not retrieved get zero mass.
Distribution knn_distribution(std::span<const Neighbor> neighbors, double temperature, std::uint32_t vocab_size);

/// Accumulates `weight * knn_distribution(neighbors, T)` into `out` without
/// materializing the intermediate vector.
void add_knn_distribution(std::span<const Neighbor> neighbors, double temperature, double weight,
                          std::span<double> out);

/// lambda * p_knn + (1 - lambda) * p_base.
Distribution interpolate(std::span<const double> p_knn, std::span<const double> p_base, double lambda);

struct VanillaConfig {
    std::size_t k = 8;
    double temperature = 10.0;
    double lambda = 0.7;
};

void validate(const VanillaConfig& cfg);

/// Fixed-k retrieval interpolated with the base distribution. Uses the first
/// cfg.k neighbors; fewer than cfg.k is an error.
Distribution vanilla_predict(std::span<const double> base_dist, std::span<const Neighbor> neighbors,
                             const VanillaConfig& cfg);

/// Equal weight on the base distribution and on the kNN distribution at every
/// k in the choice set {0, 1, 2, 4, ..., max_k}.
Distribution uniform_predict(std::span<const double> base_dist, std::span<const Neighbor> neighbors, std::size_t max_k,
                             double temperature);

}  // namespace aknn
