// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "locqor/error.hpp"
#include "locqor/util.hpp"

namespace locqor {
namespace {

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(sha256("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(to_hex(sha256("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Fnv1a64, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(SplitMix64, ReferenceSequence) {
  // Reference outputs of the published SplitMix64 for seed 1234567.
  std::uint64_t s = 1234567;
  EXPECT_EQ(splitmix64(s), 6457827717110365317ULL);
  EXPECT_EQ(splitmix64(s), 3203168211198807973ULL);
  EXPECT_EQ(splitmix64(s), 9817491932198370423ULL);
}

TEST(Rng, MatchesStdMt19937_64) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
    Rng r(seed);
    std::mt19937_64 ref(seed);
    for (int i = 0; i < 2000; ++i) ASSERT_EQ(r.next_u64(), ref()) << "seed " << seed << " i " << i;
  }
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowIsInRangeAndCoversIt) {
  Rng r(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int c : seen) EXPECT_GT(c, 800);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0, s2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutationAndSeeded) {
  std::vector<int> a(100), b;
  for (int i = 0; i < 100; ++i) a[i] = i;
  b = a;
  Rng r1(9), r2(9);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(FormatDouble, RoundTrips) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = (r.uniform() - 0.5) * std::pow(10.0, static_cast<int>(r.below(20)) - 10);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(-0.12), "-0.12");
  EXPECT_EQ(format_float(0.1f), "0.1");
}

TEST(RoundF32, IsIdempotent) {
  const double v = round_f32(0.1);
  EXPECT_EQ(round_f32(v), v);
  EXPECT_EQ(static_cast<float>(v), 0.1f);
}

TEST(BinIo, RoundTripAndBounds) {
  std::string buf;
  binio::put_u32(buf, 0x01020304u);
  binio::put_u64(buf, 0x0102030405060708ULL);
  binio::put_f32(buf, -1.5f);
  EXPECT_EQ(static_cast<unsigned char>(buf[0]), 0x04);  // little-endian
  binio::Reader r(buf);
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.u64(), 0x0102030405060708ULL);
  EXPECT_EQ(r.f32(), -1.5f);
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.u32(), Error);
  binio::Reader r2(buf);
  EXPECT_THROW(r2.bytes(buf.size() + 1), Error);
}

TEST(Files, MissingFileNamesPath) {
  try {
    read_file("/nonexistent/locqor-file");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/locqor-file"), std::string::npos);
  }
}

}  // namespace
}  // namespace locqor
