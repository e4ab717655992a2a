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


#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "aknn/util.hpp"

namespace aknn {
namespace {

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs = differs || x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, UniformIndexStaysInRange) {
    Rng rng(1);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.uniform_index(7);
        ASSERT_LT(v, 7u);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, UniformMoments) {
    Rng rng(2);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
    Rng rng(3);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.02);
    EXPECT_NEAR(sq / n, 1.0, 0.03);
}

TEST(Rng, CategoricalFollowsWeights) {
    Rng rng(4);
    const std::vector<double> w{1.0, 0.0, 3.0};
    std::vector<int> hits(3);
    for (int i = 0; i < 40000; ++i) ++hits[rng.categorical(w)];
    EXPECT_EQ(hits[1], 0);
    EXPECT_NEAR(hits[2] / 40000.0, 0.75, 0.01);
}

TEST(Rng, DeriveSeedSeparatesTags) {
    EXPECT_EQ(derive_seed(7, 1), derive_seed(7, 1));
    EXPECT_NE(derive_seed(7, 1), derive_seed(7, 2));
    EXPECT_NE(derive_seed(7, 1), derive_seed(8, 1));
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a("", 0), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a", 1), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a("foobar", 6), 0x85944171f73967e8ULL);
}

TEST(Io, RoundTripLittleEndian) {
    std::stringstream ss;
    io::write_u32(ss, 0x01020304u);
    io::write_u64(ss, 0x0102030405060708ULL);
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), 12u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x04);
    EXPECT_EQ(io::read_u32(ss, "a"), 0x01020304u);
    EXPECT_EQ(io::read_u64(ss, "b"), 0x0102030405060708ULL);
    EXPECT_TRUE(io::at_eof(ss));
}

TEST(Io, ShortReadIsCorrupt) {
    std::stringstream ss("ab");
    try {
        io::read_u32(ss, "field");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kCorrupt);
    }
}

TEST(Io, MissingFileIsIoError) {
    try {
        io::open_in("/nonexistent/dir/file.bin");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kIo);
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/file.bin"), std::string::npos);
    }
}

TEST(ParseTokenIds, Basic) {
    EXPECT_EQ(parse_token_ids("3 1  4\r"), (std::vector<std::uint32_t>{3, 1, 4}));
    EXPECT_TRUE(parse_token_ids("").empty());
    EXPECT_THROW(parse_token_ids("3 x"), Error);
    EXPECT_THROW(parse_token_ids("-1"), Error);
}

TEST(ErrorCodes, Names) {
    EXPECT_STREQ(error_code_name(ErrorCode::kCorrupt), "corrupt file");
    EXPECT_STREQ(error_code_name(ErrorCode::kOutOfRange), "out of range");
}

}  // namespace
}  // namespace aknn
