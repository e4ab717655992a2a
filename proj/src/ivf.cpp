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

#include "aknn/ivf.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/core.h>

#include "aknn/util.hpp"

namespace aknn {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'K', 'N', 'N', 'I', 'V', '1'};

double sq_dist(std::span<const float> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

std::size_t nearest_centroid(std::span<const float> x, const std::vector<double>& centroids, std::size_t dim) {
    const std::size_t c_count = centroids.size() / dim;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < c_count; ++c) {
        const double d = sq_dist(x, {centroids.data() + c * dim, dim});
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

IvfIndex::IvfIndex(std::uint32_t dim, std::vector<float> centroids, std::vector<std::vector<std::uint64_t>> lists,
                   std::uint64_t entry_count, std::uint64_t datastore_fingerprint)
    : dim_(dim),
      centroids_(std::move(centroids)),
      lists_(std::move(lists)),
      entry_count_(entry_count),
      fingerprint_(datastore_fingerprint) {
    AKNN_THROW_IF_NOT(dim_ > 0, kInvalidArgument, "ivf dim must be positive");
    AKNN_THROW_IF_NOT(!lists_.empty(), kInvalidArgument, "ivf index needs at least one centroid");
    AKNN_THROW_IF_NOT(centroids_.size() == lists_.size() * dim_, kShapeMismatch, "ivf centroid matrix has wrong size");
    std::vector<bool> seen(entry_count_, false);
    std::uint64_t total = 0;
    for (const auto& list : lists_) {
        for (std::uint64_t idx : list) {
            AKNN_THROW_IF_NOT(idx < entry_count_ && !seen[idx], kShapeMismatch,
                              fmt::format("ivf list entry {} is out of range or duplicated", idx));
            seen[idx] = true;
            ++total;
        }
    }
    AKNN_THROW_IF_NOT(total == entry_count_, kShapeMismatch, "ivf lists do not cover every datastore entry");
}

void IvfIndex::check_compatible(const Datastore& ds) const {
    AKNN_THROW_IF_NOT(ds.dim() == dim_ && ds.size() == entry_count_ && ds.fingerprint() == fingerprint_, kShapeMismatch,
                      fmt::format("ivf index (dim {}, {} entries) was not built on this datastore (dim {}, {} entries)",
                                  dim_, entry_count_, ds.dim(), ds.size()));
}

std::vector<std::size_t> IvfIndex::probe_order(std::span<const float> query, std::size_t nprobe) const {
    std::vector<std::pair<double, std::size_t>> order(n_centroids());
    for (std::size_t c = 0; c < order.size(); ++c) {
        order[c] = {distance(query, centroid(c), Metric::kSquaredL2), c};
    }
    nprobe = std::min(nprobe, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nprobe), order.end());
    std::vector<std::size_t> ids(nprobe);
    for (std::size_t i = 0; i < nprobe; ++i) {
        ids[i] = order[i].second;
    }
    return ids;
}

NeighborList IvfIndex::search(const Datastore& ds, std::span<const float> query, std::size_t k, std::size_t nprobe,
                              Metric metric) const {
    AKNN_THROW_IF_NOT(query.size() == dim_, kDimensionMismatch,
                      fmt::format("query has {} components, index dim is {}", query.size(), dim_));
    AKNN_THROW_IF_NOT(k >= 1, kOutOfRange, "k must be at least 1");
    AKNN_THROW_IF_NOT(nprobe >= 1 && nprobe <= n_centroids(), kOutOfRange,
                      fmt::format("nprobe={} must be in [1, {}]", nprobe, n_centroids()));
    AKNN_THROW_IF_NOT(ds.size() == entry_count_ && ds.dim() == dim_, kShapeMismatch,
                      "ivf index searched with a datastore of a different shape");
    detail::TopK top(k);
    for (std::size_t c : probe_order(query, nprobe)) {
        for (std::uint64_t idx : lists_[c]) {
            const double d = distance(query, ds.key(idx), metric);
            if (d <= top.bound()) {
                top.push({d, ds.value(idx), idx});
            }
        }
    }
    return std::move(top).take_sorted();
}

IvfIndex train_ivf(const Datastore& ds, const IvfTrainOptions& options, std::vector<double>* objective_trace) {
    const std::size_t n = ds.size();
    const std::size_t dim = ds.dim();
    const std::size_t c_count = options.n_centroids;
    AKNN_THROW_IF_NOT(n >= 1, kInvalidArgument, "cannot train an ivf index on an empty datastore");
    AKNN_THROW_IF_NOT(c_count >= 1 && c_count <= n, kOutOfRange,
                      fmt::format("n_centroids={} must be in [1, {}]", c_count, n));

    // Seeded uniform sample of distinct entries (partial Fisher-Yates).
    Rng rng(options.seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < c_count; ++i) {
        std::swap(perm[i], perm[i + rng.uniform_index(n - i)]);
    }
    std::vector<double> centroids(c_count * dim);
    for (std::size_t c = 0; c < c_count; ++c) {
        auto key = ds.key(perm[c]);
        std::copy(key.begin(), key.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }

    std::vector<std::size_t> assign(n, std::numeric_limits<std::size_t>::max());
    std::vector<std::size_t> counts(c_count);
    std::vector<double> sums(c_count * dim);
    for (std::size_t iter = 0; iter < options.n_iters; ++iter) {
        bool changed = false;
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest_centroid(ds.key(i), centroids, dim);
            changed |= (c != assign[i]);
            assign[i] = c;
            ++counts[c];
        }
        // An empty cluster takes over the point farthest from its centroid in
        // the largest cluster.
        for (std::size_t c = 0; c < c_count; ++c) {
            if (counts[c] != 0) {
                continue;
            }
            const std::size_t largest =
                static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] != largest) {
                    continue;
                }
                const double d = sq_dist(ds.key(i), {centroids.data() + largest * dim, dim});
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            assign[far] = c;
            --counts[largest];
            ++counts[c];
            auto key = ds.key(far);
            std::copy(key.begin(), key.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
            changed = true;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto key = ds.key(i);
            double* s = sums.data() + assign[i] * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                s[j] += key[j];
            }
        }
        for (std::size_t c = 0; c < c_count; ++c) {
            for (std::size_t j = 0; j < dim; ++j) {
                centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
            }
        }

        if (objective_trace != nullptr) {
            double obj = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                obj += sq_dist(ds.key(i), {centroids.data() + assign[i] * dim, dim});
            }
            objective_trace->push_back(obj);
        }
        if (!changed) {
            break;
        }
    }

    // Final lists use the stored (f32) centroids so that search and build agree
    // on which centroid is nearest.
    std::vector<float> stored(centroids.begin(), centroids.end());
    std::vector<double> stored_d(stored.begin(), stored.end());
    std::vector<std::vector<std::uint64_t>> lists(c_count);
    for (std::size_t i = 0; i < n; ++i) {
        lists[nearest_centroid(ds.key(i), stored_d, dim)].push_back(i);
    }
    return IvfIndex(static_cast<std::uint32_t>(dim), std::move(stored), std::move(lists), n, ds.fingerprint());
}

void save_ivf(const IvfIndex& index, const std::filesystem::path& path) {
    auto out = io::open_out(path);
    io::write_bytes(out, kMagic, sizeof(kMagic));
    io::write_u32(out, static_cast<std::uint32_t>(index.n_centroids()));
    io::write_u32(out, index.dim());
    io::write_u64(out, index.entry_count());
    io::write_u64(out, index.datastore_fingerprint());
    io::write_f32s(out, index.centroids());
    for (const auto& list : index.lists()) {
        io::write_u64(out, list.size());
    }
    for (const auto& list : index.lists()) {
        io::write_u64s(out, list);
    }
    out.flush();
    AKNN_THROW_IF_NOT(out.good(), kIo, fmt::format("failed writing '{}'", path.string()));
}

IvfIndex load_ivf(const std::filesystem::path& path) {
    auto in = io::open_in(path);
    char magic[8];
    io::read_bytes(in, magic, sizeof(magic), "ivf magic");
    AKNN_THROW_IF_NOT(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, kCorrupt,
                      fmt::format("'{}' is not an ivf index file (bad magic)", path.string()));
    const std::uint32_t c_count = io::read_u32(in, "ivf centroid count");
    const std::uint32_t dim = io::read_u32(in, "ivf dim");
    const std::uint64_t entries = io::read_u64(in, "ivf entry count");
    const std::uint64_t fingerprint = io::read_u64(in, "ivf fingerprint");
    AKNN_THROW_IF_NOT(c_count > 0 && dim > 0, kCorrupt, "ivf header has zero centroids or dim");

    const auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    const std::uint64_t remaining = static_cast<std::uint64_t>(in.tellg() - header_end);
    in.seekg(header_end);
    const std::uint64_t expected = std::uint64_t{c_count} * dim * sizeof(float) + std::uint64_t{c_count} * 8 + entries * 8;
    AKNN_THROW_IF_NOT(remaining == expected, kCorrupt,
                      fmt::format("ivf payload has {} bytes, header implies {}", remaining, expected));

    std::vector<float> centroids(std::size_t{c_count} * dim);
    io::read_bytes(in, centroids.data(), centroids.size() * sizeof(float), "ivf centroids");
    std::vector<std::uint64_t> lengths(c_count);
    io::read_bytes(in, lengths.data(), lengths.size() * 8, "ivf list lengths");
    std::uint64_t total = 0;
    for (auto len : lengths) {
        total += len;
    }
    AKNN_THROW_IF_NOT(total == entries, kCorrupt, "ivf list lengths do not sum to the entry count");
    std::vector<std::vector<std::uint64_t>> lists(c_count);
    for (std::size_t c = 0; c < c_count; ++c) {
        lists[c].resize(lengths[c]);
        io::read_bytes(in, lists[c].data(), lengths[c] * 8, "ivf list indices");
    }
    try {
        return IvfIndex(dim, std::move(centroids), std::move(lists), entries, fingerprint);
    } catch (const Error& e) {
        throw Error(ErrorCode::kCorrupt, fmt::format("'{}': {}", path.string(), e.what()));
    }
}

}  // namespace aknn
