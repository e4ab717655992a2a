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
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aknn {

enum class ErrorCode : int {
    kInvalidArgument = 1,
    kDimensionMismatch = 2,
    kOutOfRange = 3,
    kIo = 4,
    kCorrupt = 5,
    kNumeric = 6,
    kShapeMismatch = 7,
};

const char* error_code_name(ErrorCode code);

/// Every failure raised by the library. The code maps one-to-one onto the C
/// API status values.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

#define AKNN_THROW_IF_NOT(cond, code, msg)               \
    do {                                                 \
        if (!(cond)) {                                   \
            throw ::aknn::Error(::aknn::ErrorCode::code, (msg)); \
        }                                                \
    } while (false)

/// splitmix64-seeded xoshiro256** generator. All randomness in the library goes
/// through this type so that artifacts are byte-identical across standard
/// library implementations (std distributions are not).
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (no cached second variate).
    double normal();
    /// Sample an index from non-negative weights (need not be normalized).
    std::size_t categorical(std::span<const double> weights);

  private:
    std::uint64_t s_[4];
};

/// Derive an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

// Little-endian binary helpers. The library only targets little-endian hosts;
// a static_assert in util.cpp enforces that.
namespace io {

void write_bytes(std::ostream& out, const void* data, std::size_t size);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32s(std::ostream& out, std::span<const float> v);
void write_u32s(std::ostream& out, std::span<const std::uint32_t> v);
void write_u64s(std::ostream& out, std::span<const std::uint64_t> v);

/// Readers throw kCorrupt on short reads; `what` names the field for the message.
void read_bytes(std::istream& in, void* data, std::size_t size, const char* what);
std::uint32_t read_u32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);

/// Opening helpers raising kIo with the path in the message.
std::ofstream open_out(const std::filesystem::path& path);
std::ifstream open_in(const std::filesystem::path& path);

/// True when no bytes remain in the stream.
bool at_eof(std::istream& in);

}  // namespace io

/// Parse whitespace-separated unsigned integers. Throws kInvalidArgument on junk.
std::vector<std::uint32_t> parse_token_ids(std::string_view text);

}  // namespace aknn
