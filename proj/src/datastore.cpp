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

#include "aknn/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/core.h>

#include "aknn/util.hpp"

namespace aknn {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'K', 'N', 'N', 'D', 'S', '1'};

void check_key(std::span<const float> key, std::uint32_t dim) {
    AKNN_THROW_IF_NOT(key.size() == dim, kDimensionMismatch,
                      fmt::format("key has {} components, datastore dim is {}", key.size(), dim));
    for (float v : key) {
        AKNN_THROW_IF_NOT(std::isfinite(v), kNumeric, "key has a non-finite component");
    }
}

void check_value(TokenId value, std::uint32_t vocab_size) {
    AKNN_THROW_IF_NOT(value < vocab_size, kOutOfRange,
                      fmt::format("token id {} out of range for vocab size {}", value, vocab_size));
}

}  // namespace

Datastore::Datastore(std::uint32_t dim, std::uint32_t vocab_size) : dim_(dim), vocab_size_(vocab_size) {
    AKNN_THROW_IF_NOT(dim > 0, kInvalidArgument, "datastore dim must be positive");
    AKNN_THROW_IF_NOT(vocab_size > 0, kInvalidArgument, "datastore vocab size must be positive");
}

Datastore::Datastore(std::uint32_t dim, std::uint32_t vocab_size, std::vector<float> keys, std::vector<TokenId> values)
    : Datastore(dim, vocab_size) {
    AKNN_THROW_IF_NOT(keys.size() == values.size() * dim, kDimensionMismatch,
                      fmt::format("{} key floats do not match {} values of dim {}", keys.size(), values.size(), dim));
    for (std::size_t i = 0; i < values.size(); ++i) {
        check_key({keys.data() + i * dim, dim}, dim);
        check_value(values[i], vocab_size);
    }
    keys_ = std::move(keys);
    values_ = std::move(values);
}

std::uint64_t Datastore::fingerprint() const {
    std::uint64_t h = fnv1a(&dim_, sizeof(dim_));
    h = fnv1a(&vocab_size_, sizeof(vocab_size_), h);
    h = fnv1a(keys_.data(), keys_.size() * sizeof(float), h);
    return fnv1a(values_.data(), values_.size() * sizeof(TokenId), h);
}

DatastoreBuilder::DatastoreBuilder(std::uint32_t dim, std::uint32_t vocab_size) : dim_(dim), vocab_size_(vocab_size) {
    AKNN_THROW_IF_NOT(dim > 0, kInvalidArgument, "datastore dim must be positive");
    AKNN_THROW_IF_NOT(vocab_size > 0, kInvalidArgument, "datastore vocab size must be positive");
}

void DatastoreBuilder::add(std::span<const float> key, TokenId value) {
    check_key(key, dim_);
    check_value(value, vocab_size_);
    keys_.insert(keys_.end(), key.begin(), key.end());
    values_.push_back(value);
}

Datastore DatastoreBuilder::finish() && {
    return Datastore(dim_, vocab_size_, std::move(keys_), std::move(values_));
}

double distance(std::span<const float> a, std::span<const float> b, Metric metric) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return metric == Metric::kL2 ? std::sqrt(acc) : acc;
}

namespace detail {

void TopK::push(const Neighbor& n) {
    if (heap_.size() < k_) {
        heap_.push_back(n);
        std::push_heap(heap_.begin(), heap_.end(), neighbor_before);
    } else if (neighbor_before(n, heap_.front())) {
        std::pop_heap(heap_.begin(), heap_.end(), neighbor_before);
        heap_.back() = n;
        std::push_heap(heap_.begin(), heap_.end(), neighbor_before);
    }
}

double TopK::bound() const {
    return heap_.size() < k_ ? std::numeric_limits<double>::infinity() : heap_.front().distance;
}

NeighborList TopK::take_sorted() && {
    std::sort_heap(heap_.begin(), heap_.end(), neighbor_before);
    return std::move(heap_);
}

}  // namespace detail

NeighborList exact_search(const Datastore& ds, std::span<const float> query, std::size_t k, Metric metric) {
    AKNN_THROW_IF_NOT(query.size() == ds.dim(), kDimensionMismatch,
                      fmt::format("query has {} components, datastore dim is {}", query.size(), ds.dim()));
    AKNN_THROW_IF_NOT(k >= 1 && k <= ds.size(), kOutOfRange,
                      fmt::format("k={} must be in [1, {}] (datastore size)", k, ds.size()));
    detail::TopK top(k);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double d = distance(query, ds.key(i), metric);
        if (d <= top.bound()) {
            top.push({d, ds.value(i), i});
        }
    }
    return std::move(top).take_sorted();
}

std::vector<NeighborList> exact_search_batch(const Datastore& ds, std::span<const float> queries, std::size_t k,
                                             Metric metric) {
    const std::size_t dim = ds.dim();
    AKNN_THROW_IF_NOT(queries.size() % dim == 0, kDimensionMismatch, "query batch is not a multiple of the datastore dim");
    AKNN_THROW_IF_NOT(k >= 1 && k <= ds.size(), kOutOfRange,
                      fmt::format("k={} must be in [1, {}] (datastore size)", k, ds.size()));
    const std::size_t nq = queries.size() / dim;
    std::vector<detail::TopK> tops(nq, detail::TopK(k));
    // Block over entries so each key tile is reused by every query in the batch.
    constexpr std::size_t kTile = 256;
    for (std::size_t start = 0; start < ds.size(); start += kTile) {
        const std::size_t end = std::min(ds.size(), start + kTile);
        for (std::size_t q = 0; q < nq; ++q) {
            std::span<const float> query = queries.subspan(q * dim, dim);
            for (std::size_t i = start; i < end; ++i) {
                const double d = distance(query, ds.key(i), metric);
                if (d <= tops[q].bound()) {
                    tops[q].push({d, ds.value(i), i});
                }
            }
        }
    }
    std::vector<NeighborList> out;
    out.reserve(nq);
    for (auto& t : tops) {
        out.push_back(std::move(t).take_sorted());
    }
    return out;
}

void save_datastore(const Datastore& ds, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    io::write_bytes(out, kMagic, sizeof(kMagic));
    io::write_u32(out, ds.dim());
    io::write_u32(out, ds.vocab_size());
    io::write_u64(out, ds.size());
    io::write_f32s(out, ds.keys());
    io::write_u32s(out, ds.values());
    out.flush();
    AKNN_THROW_IF_NOT(out.good(), kIo, fmt::format("failed writing '{}'", path.string()));
}

Datastore load_datastore(const std::filesystem::path& path) {
    auto in = io::open_in(path);
    char magic[8];
    io::read_bytes(in, magic, sizeof(magic), "datastore magic");
    AKNN_THROW_IF_NOT(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, kCorrupt,
                      fmt::format("'{}' is not a datastore file (bad magic)", path.string()));
    const std::uint32_t dim = io::read_u32(in, "datastore dim");
    const std::uint32_t vocab = io::read_u32(in, "datastore vocab size");
    const std::uint64_t n = io::read_u64(in, "datastore entry count");
    AKNN_THROW_IF_NOT(dim > 0 && vocab > 0, kCorrupt, "datastore header has zero dim or vocab size");

    // Validate the declared payload against the file size before allocating.
    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const auto file_end = in.tellg();
    in.seekg(header_end);
    const std::uint64_t remaining = static_cast<std::uint64_t>(file_end - header_end);
    const std::uint64_t row_bytes = std::uint64_t{dim} * sizeof(float) + sizeof(TokenId);
    AKNN_THROW_IF_NOT(n <= remaining / row_bytes && n * row_bytes == remaining, kCorrupt,
                      fmt::format("datastore header declares {} entries of dim {} but payload has {} bytes", n, dim,
                                  remaining));

    std::vector<float> keys(n * dim);
    std::vector<TokenId> values(n);
    io::read_bytes(in, keys.data(), keys.size() * sizeof(float), "datastore keys");
    io::read_bytes(in, values.data(), values.size() * sizeof(TokenId), "datastore values");
    try {
        return Datastore(dim, vocab, std::move(keys), std::move(values));
    } catch (const Error& e) {
        throw Error(ErrorCode::kCorrupt, fmt::format("'{}': {}", path.string(), e.what()));
    }
}

}  // namespace aknn
