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

namespace aknn {

using TokenId = std::uint32_t;

/// Distance used for retrieval and, downstream, for the kNN temperature.
/// Squared L2 is the default; both rank identically.
enum class Metric { kSquaredL2, kL2 };

struct Neighbor {
    double distance = 0.0;
    TokenId value = 0;
    std::uint64_t index = 0;  // position in Datastore entry order

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Sorted by non-decreasing distance, ties by ascending index, no duplicate index.
using NeighborList = std::vector<Neighbor>;

/// Strict ordering used for every top-k selection in the library.
inline bool neighbor_before(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

/// Immutable set of (context key, token value) pairs in insertion order.
class Datastore {
  public:
    Datastore(std::uint32_t dim, std::uint32_t vocab_size);
    /// Takes ownership of row-major keys (size() * dim floats) and values.
    /// Validates shapes, finiteness and token range.
    Datastore(std::uint32_t dim, std::uint32_t vocab_size, std::vector<float> keys, std::vector<TokenId> values);

    std::uint32_t dim() const { return dim_; }
    std::uint32_t vocab_size() const { return vocab_size_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::span<const float> keys() const { return keys_; }
    std::span<const TokenId> values() const { return values_; }
    std::span<const float> key(std::size_t i) const { return {keys_.data() + i * dim_, dim_}; }
    TokenId value(std::size_t i) const { return values_[i]; }

    /// Hash of dim, vocab_size, keys and values; ties an IVF index to its datastore.
    std::uint64_t fingerprint() const;

    friend bool operator==(const Datastore&, const Datastore&) = default;

  private:
    std::uint32_t dim_;
    std::uint32_t vocab_size_;
    std::vector<float> keys_;
    std::vector<TokenId> values_;
};

/// Accumulates a pair stream in order, checking each pair as it arrives.
class DatastoreBuilder {
  public:
    DatastoreBuilder(std::uint32_t dim, std::uint32_t vocab_size);

    void add(std::span<const float> key, TokenId value);
    std::size_t size() const { return values_.size(); }
    Datastore finish() &&;

  private:
    std::uint32_t dim_;
    std::uint32_t vocab_size_;
    std::vector<float> keys_;
    std::vector<TokenId> values_;
};

/// Distance between two vectors of equal length, accumulated in double.
double distance(std::span<const float> a, std::span<const float> b, Metric metric);

/// The k entries nearest to `query`. Throws kOutOfRange when k is 0 or exceeds
/// the datastore size and kDimensionMismatch on a query of the wrong length.
NeighborList exact_search(const Datastore& ds, std::span<const float> query, std::size_t k,
                          Metric metric = Metric::kSquaredL2);

/// Row-major batch of queries (n * dim floats). Results match exact_search per row.
std::vector<NeighborList> exact_search_batch(const Datastore& ds, std::span<const float> queries, std::size_t k,
                                             Metric metric = Metric::kSquaredL2);

// Binary format, little-endian:
//   "ADKNNDS1" | u32 dim | u32 vocab_size | u64 N | N*dim f32 keys | N u32 values
void save_datastore(const Datastore& ds, const std::filesystem::path& path);
Datastore load_datastore(const std::filesystem::path& path);

namespace detail {

/// Bounded selection of the k best neighbors under neighbor_before.
class TopK {
  public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }
    void push(const Neighbor& n);
    /// Worst retained distance, or +inf while fewer than k are held.
    double bound() const;
    NeighborList take_sorted() &&;

  private:
    std::size_t k_;
    std::vector<Neighbor> heap_;
};

}  // namespace detail

}  // namespace aknn
