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
#include <vector>

#include "aknn/datastore.hpp"

namespace aknn {

struct IvfTrainOptions {
    std::size_t n_centroids = 64;
    std::size_t n_iters = 20;
    std::uint64_t seed = 0;
};

/**
 * Inverted-file index over a Datastore.
 *
 * Keys are clustered with Lloyd's k-means; each entry lives in the list of its
 * nearest centroid. A query scans only the `nprobe` lists whose centroids are
 * closest to it. The index stores entry indices only and is always searched
 * together with the datastore it was trained on (checked by fingerprint).
 */
class IvfIndex {
  public:
    IvfIndex(std::uint32_t dim, std::vector<float> centroids, std::vector<std::vector<std::uint64_t>> lists,
             std::uint64_t entry_count, std::uint64_t datastore_fingerprint);

    std::uint32_t dim() const { return dim_; }
    std::size_t n_centroids() const { return lists_.size(); }
    std::span<const float> centroids() const { return centroids_; }
    std::span<const float> centroid(std::size_t c) const { return {centroids_.data() + c * dim_, dim_}; }
    const std::vector<std::vector<std::uint64_t>>& lists() const { return lists_; }
    std::uint64_t entry_count() const { return entry_count_; }
    std::uint64_t datastore_fingerprint() const { return fingerprint_; }

    /// Throws kShapeMismatch if `ds` is not the datastore this index was built on.
    void check_compatible(const Datastore& ds) const;

    /// Up to k nearest entries among the nprobe closest lists, same ordering
    /// contract as exact_search. Returns fewer than k when the probed lists are
    /// short; never pads.
    NeighborList search(const Datastore& ds, std::span<const float> query, std::size_t k, std::size_t nprobe,
                        Metric metric = Metric::kSquaredL2) const;

    /// The nprobe centroid ids nearest to `query`, nearest first, ties by id.
    std::vector<std::size_t> probe_order(std::span<const float> query, std::size_t nprobe) const;

    friend bool operator==(const IvfIndex&, const IvfIndex&) = default;

  private:
    std::uint32_t dim_;
    std::vector<float> centroids_;
    std::vector<std::vector<std::uint64_t>> lists_;
    std::uint64_t entry_count_;
    std::uint64_t fingerprint_;
};

/// Seeded Lloyd's k-means. If `objective_trace` is given it receives the
/// sum of squared distances to the assigned centroid after every iteration.
IvfIndex train_ivf(const Datastore& ds, const IvfTrainOptions& options, std::vector<double>* objective_trace = nullptr);

// "ADKNNIV1" | u32 C | u32 dim | u64 entry_count | u64 datastore fingerprint |
// C*dim f32 centroids | C u64 list lengths | entry_count u64 indices (list order)
void save_ivf(const IvfIndex& index, const std::filesystem::path& path);
IvfIndex load_ivf(const std::filesystem::path& path);

}  // namespace aknn
