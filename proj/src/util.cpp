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

#include "aknn/util.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <fmt/core.h>

namespace aknn {

static_assert(std::endian::native == std::endian::little, "aknn file formats assume a little-endian host");

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument:
            return "invalid argument";
        case ErrorCode::kDimensionMismatch:
            return "dimension mismatch";
        case ErrorCode::kOutOfRange:
            return "out of range";
        case ErrorCode::kIo:
            return "io error";
        case ErrorCode::kCorrupt:
            return "corrupt file";
        case ErrorCode::kNumeric:
            return "numeric error";
        case ErrorCode::kShapeMismatch:
            return "shape mismatch";
    }
    return "unknown error";
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) {
        s = splitmix64(x);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % n;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    AKNN_THROW_IF_NOT(!weights.empty() && total > 0.0, kInvalidArgument, "categorical: weights must have positive mass");
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u < 0.0) {
            return i;
        }
    }
    // Rounding can leave u marginally >= 0; return the last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) {
            return i;
        }
    }
    return weights.size() - 1;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed ^ (tag * 0xd1b54a32d192ed03ULL);
    splitmix64(x);
    return splitmix64(x);
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

namespace io {

void write_bytes(std::ostream& out, const void* data, std::size_t size) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    AKNN_THROW_IF_NOT(out.good(), kIo, "write failed");
}

void write_u32(std::ostream& out, std::uint32_t v) {
    write_bytes(out, &v, sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
    write_bytes(out, &v, sizeof(v));
}

void write_f32s(std::ostream& out, std::span<const float> v) {
    write_bytes(out, v.data(), v.size_bytes());
}

void write_u32s(std::ostream& out, std::span<const std::uint32_t> v) {
    write_bytes(out, v.data(), v.size_bytes());
}

void write_u64s(std::ostream& out, std::span<const std::uint64_t> v) {
    write_bytes(out, v.data(), v.size_bytes());
}

void read_bytes(std::istream& in, void* data, std::size_t size, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    AKNN_THROW_IF_NOT(static_cast<std::size_t>(in.gcount()) == size, kCorrupt,
                      fmt::format("truncated file while reading {}", what));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v;
    read_bytes(in, &v, sizeof(v), what);
    return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
    std::uint64_t v;
    read_bytes(in, &v, sizeof(v), what);
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    AKNN_THROW_IF_NOT(out.is_open(), kIo, fmt::format("cannot open '{}' for writing", path.string()));
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    AKNN_THROW_IF_NOT(in.is_open(), kIo, fmt::format("cannot open '{}' for reading", path.string()));
    return in;
}

bool at_eof(std::istream& in) {
    return in.peek() == std::char_traits<char>::eof();
}

}  // namespace io

std::vector<std::uint32_t> parse_token_ids(std::string_view text) {
    std::vector<std::uint32_t> ids;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\r' || text[pos] == '\n')) {
            ++pos;
        }
        if (pos >= text.size()) {
            break;
        }
        std::uint32_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
        AKNN_THROW_IF_NOT(ec == std::errc() && (ptr == text.data() + text.size() || *ptr == ' ' || *ptr == '\r' || *ptr == '\n'),
                          kInvalidArgument, fmt::format("bad token id in '{}'", text));
        ids.push_back(v);
        pos = static_cast<std::size_t>(ptr - text.data());
    }
    return ids;
}

}  // namespace aknn
