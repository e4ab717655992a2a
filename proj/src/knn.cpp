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

#include "aknn/knn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/core.h>

#include "aknn/kchoices.hpp"
#include "aknn/util.hpp"

namespace aknn {

KChoices::KChoices(std::size_t max_k) : max_k_(max_k) {
    AKNN_THROW_IF_NOT(max_k >= 1 && std::has_single_bit(max_k), kInvalidArgument,
                      fmt::format("K={} must be a power of two >= 1", max_k));
    values_.push_back(0);
    for (std::size_t k = 1; k <= max_k; k *= 2) {
        values_.push_back(k);
    }
}

bool is_distribution(std::span<const double> p, double tol) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            return false;
        }
        sum += v;
    }
    return !p.empty() && std::abs(sum - 1.0) <= tol;
}

std::size_t argmax(std::span<const double> p) {
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

void add_knn_distribution(std::span<const Neighbor> neighbors, double temperature, double weight,
                          std::span<double> out) {
    AKNN_THROW_IF_NOT(!neighbors.empty(), kInvalidArgument, "kNN distribution needs at least one neighbor");
    AKNN_THROW_IF_NOT(temperature > 0.0, kInvalidArgument, "temperature must be positive");
    // Neighbor lists are sorted, but take the true minimum so unsorted input
    // still gets a stable shift.
    double d_min = neighbors.front().distance;
    for (const auto& n : neighbors) {
        d_min = std::min(d_min, n.distance);
    }
    double total = 0.0;
    for (const auto& n : neighbors) {
        total += std::exp(-(n.distance - d_min) / temperature);
    }
    for (const auto& n : neighbors) {
        AKNN_THROW_IF_NOT(n.value < out.size(), kOutOfRange,
                          fmt::format("neighbor value {} outside vocab of size {}", n.value, out.size()));
        out[n.value] += weight * (std::exp(-(n.distance - d_min) / temperature) / total);
    }
}

Distribution knn_distribution(std::span<const Neighbor> neighbors, double temperature, std::uint32_t vocab_size) {
    Distribution p(vocab_size, 0.0);
    add_knn_distribution(neighbors, temperature, 1.0, p);
    return p;
}

Distribution interpolate(std::span<const double> p_knn, std::span<const double> p_base, double lambda) {
    AKNN_THROW_IF_NOT(p_knn.size() == p_base.size(), kShapeMismatch,
                      fmt::format("cannot interpolate distributions of size {} and {}", p_knn.size(), p_base.size()));
    AKNN_THROW_IF_NOT(lambda >= 0.0 && lambda <= 1.0, kInvalidArgument, "lambda must be in [0, 1]");
    Distribution out(p_knn.size());
    // Endpoints are returned exactly.
    if (lambda == 0.0) {
        std::copy(p_base.begin(), p_base.end(), out.begin());
    } else if (lambda == 1.0) {
        std::copy(p_knn.begin(), p_knn.end(), out.begin());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = lambda * p_knn[i] + (1.0 - lambda) * p_base[i];
        }
    }
    return out;
}

void validate(const VanillaConfig& cfg) {
    AKNN_THROW_IF_NOT(cfg.k >= 1, kInvalidArgument, "vanilla k must be >= 1");
    AKNN_THROW_IF_NOT(cfg.temperature > 0.0, kInvalidArgument, "vanilla temperature must be positive");
    AKNN_THROW_IF_NOT(cfg.lambda >= 0.0 && cfg.lambda <= 1.0, kInvalidArgument, "vanilla lambda must be in [0, 1]");
}

Distribution vanilla_predict(std::span<const double> base_dist, std::span<const Neighbor> neighbors,
                             const VanillaConfig& cfg) {
    validate(cfg);
    AKNN_THROW_IF_NOT(neighbors.size() >= cfg.k, kOutOfRange,
                      fmt::format("vanilla k={} but only {} neighbors retrieved", cfg.k, neighbors.size()));
    if (cfg.lambda == 0.0) {
        return Distribution(base_dist.begin(), base_dist.end());
    }
    const auto p_knn = knn_distribution(neighbors.first(cfg.k), cfg.temperature,
                                        static_cast<std::uint32_t>(base_dist.size()));
    return interpolate(p_knn, base_dist, cfg.lambda);
}

Distribution uniform_predict(std::span<const double> base_dist, std::span<const Neighbor> neighbors, std::size_t max_k,
                             double temperature) {
    const KChoices choices(max_k);
    AKNN_THROW_IF_NOT(neighbors.size() >= max_k, kOutOfRange,
                      fmt::format("uniform predictor needs {} neighbors, got {}", max_k, neighbors.size()));
    const double w = 1.0 / static_cast<double>(choices.size());
    Distribution out(base_dist.size());
    for (std::size_t v = 0; v < out.size(); ++v) {
        out[v] = w * base_dist[v];
    }
    for (std::size_t i = 1; i < choices.size(); ++i) {
        add_knn_distribution(neighbors.first(choices[i]), temperature, w, out);
    }
    return out;
}

}  // namespace aknn
