#include "spdcstat/coincidence.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "spdcstat/errors.hpp"
#include "support/brute_force.hpp"

namespace spdc {
namespace {

TagStream stream_of(std::vector<TagRecord> records) {
  TagStream s;
  s.records = std::move(records);
  return s;
}

using Counts = std::array<std::uint64_t, 5>;

TEST(CountCoincidences, SingleEvent) {
  const auto h = count_coincidences(stream_of({{0, 0}, {3, 1}}), 1);
  EXPECT_EQ(h.counts, (Counts{0, 1, 0, 0, 0}));
  EXPECT_EQ(h.opportunities, 1u);
}

TEST(CountCoincidences, OnlyReference) {
  const auto h = count_coincidences(stream_of({{0, 0}}), 1);
  EXPECT_EQ(h.counts, (Counts{1, 0, 0, 0, 0}));
}

TEST(CountCoincidences, PairInsideWindow) {
  const auto h = count_coincidences(stream_of({{0, 0}, {5, 1}, {6, 2}}), 2);
  EXPECT_EQ(h.counts[2], 1u);
}

TEST(CountCoincidences, LaterEventOutsideWindowDropped) {
  const auto h = count_coincidences(stream_of({{0, 0}, {5, 1}, {15, 2}}), 2);
  EXPECT_EQ(h.counts, (Counts{0, 1, 0, 0, 0}));
}

TEST(CountCoincidences, SameChannelCountsOnce) {
  const auto h = count_coincidences(stream_of({{0, 0}, {5, 1}, {6, 1}}), 2);
  EXPECT_EQ(h.counts, (Counts{0, 1, 0, 0, 0}));
}

TEST(CountCoincidences, WindowIsInclusive) {
  const auto h = count_coincidences(stream_of({{0, 0}, {5, 1}, {7, 2}}), 2);
  EXPECT_EQ(h.counts[2], 1u);
}

TEST(CountCoincidences, FourPlusBin) {
  const auto h =
      count_coincidences(stream_of({{0, 0}, {5, 1}, {5, 2}, {5, 3}, {5, 4}, {10, 0}}), 1);
  EXPECT_EQ(h.counts, (Counts{1, 0, 0, 0, 1}));
}

TEST(CountCoincidences, PulseBoundariesAreHalfOpen) {
  // Event at 10 ties with the second reference and belongs to that pulse.
  const auto h = count_coincidences(stream_of({{0, 0}, {9, 1}, {10, 2}, {10, 0}}), 5);
  EXPECT_EQ(h.counts, (Counts{0, 2, 0, 0, 0}));
  // Same content with the detector record listed after the reference.
  const auto g = count_coincidences(stream_of({{0, 0}, {9, 1}, {10, 0}, {10, 2}}), 5);
  EXPECT_EQ(g.counts, h.counts);
}

TEST(CountCoincidences, EventsBeforeFirstReferenceDiscarded) {
  const auto h = count_coincidences(stream_of({{1, 1}, {2, 2}, {3, 0}, {4, 3}}), 5);
  EXPECT_EQ(h.counts, (Counts{0, 1, 0, 0, 0}));
  EXPECT_EQ(h.opportunities, 1u);
}

TEST(CountCoincidences, NonZeroReferenceChannel) {
  TagStream s;
  s.header.reference_channel = 3;
  s.records = {{0, 3}, {1, 0}, {1, 4}, {9, 3}};
  const auto h = count_coincidences(s, 1);
  EXPECT_EQ(h.counts, (Counts{1, 0, 1, 0, 0}));
}

TEST(CountCoincidences, NoReferenceIsAnError) {
  EXPECT_THROW(count_coincidences(stream_of({}), 1), EmptyOpportunitiesError);
  EXPECT_THROW(count_coincidences(stream_of({{1, 1}, {2, 2}}), 1), EmptyOpportunitiesError);
}

TEST(CountCoincidences, RejectsZeroWindow) {
  EXPECT_THROW(count_coincidences(stream_of({{0, 0}}), 0), DomainError);
  EXPECT_THROW(CoincidenceCounter(TagStreamHeader{}, std::span<const std::uint64_t>{}),
               DomainError);
}

TEST(CoincidenceCounter, RejectsDisorderAndUnknownChannels) {
  const std::uint64_t w[] = {1};
  CoincidenceCounter c(TagStreamHeader{}, w);
  c.push({5, 0});
  EXPECT_THROW(c.push({4, 1}), CorruptionError);
  CoincidenceCounter d(TagStreamHeader{}, w);
  EXPECT_THROW(d.push({4, 7}), CorruptionError);
}

TEST(SweepWindows, FiveWindows) {
  const auto s = testing::random_stream(3, 2000);
  const std::vector<std::uint64_t> windows{1, 2, 3, 4, 5};
  const auto hs = sweep_windows(s, windows);
  ASSERT_EQ(hs.size(), 5u);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    EXPECT_EQ(hs[i].window_ticks, windows[i]);
    EXPECT_EQ(hs[i], count_coincidences(s, windows[i]));
  }
}

TEST(SweepWindows, MatchesBruteForce) {
  const std::vector<std::uint64_t> windows{1, 2, 3, 5, 8, 20};
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = testing::random_stream(seed, 2000, static_cast<std::uint8_t>(seed % 5));
    const auto hs = sweep_windows(s, windows);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      EXPECT_EQ(hs[i], testing::brute_force_count(s, windows[i])) << seed << " w" << windows[i];
    }
  }
}

TEST(SweepWindows, ConservationAndMonotonicity) {
  const std::vector<std::uint64_t> windows{1, 2, 3, 4, 5, 6, 7, 8};
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto hs = sweep_windows(testing::random_stream(seed, 3000), windows);
    std::uint64_t previous_multi = 0;
    for (const auto& h : hs) {
      std::uint64_t total = 0, multi = 0;
      for (int n = 0; n <= 4; ++n) total += h.counts[n];
      for (int n = 2; n <= 4; ++n) multi += h.counts[n];
      EXPECT_EQ(total, h.opportunities);
      EXPECT_GE(multi, previous_multi);
      previous_multi = multi;
    }
  }
}

TEST(SweepWindows, StreamingReaderMatches) {
  const auto s = testing::random_stream(9, 50000);
  std::stringstream io(std::ios::in | std::ios::out | std::ios::binary);
  {
    TagWriter w(io, s.header);
    w.write(s.records);
  }
  TagReader r(io);
  const std::vector<std::uint64_t> windows{1, 4};
  EXPECT_EQ(sweep_windows(r, windows), sweep_windows(s, windows));
}

TEST(Partition, BoundariesStartAtReferences) {
  const auto s = testing::random_stream(21, 10000);
  const auto b = partition_at_pulses(s, 7);
  ASSERT_GE(b.size(), 2u);
  EXPECT_EQ(b.front(), 0u);
  EXPECT_EQ(b.back(), s.records.size());
  for (std::size_t i = 1; i + 1 < b.size(); ++i) {
    EXPECT_LT(b[i - 1], b[i]);
    // Everything from the cut up to the first reference shares its timestamp.
    std::size_t j = b[i];
    while (s.records[j].channel != 0) ++j;
    for (std::size_t k = b[i]; k < j; ++k) EXPECT_EQ(s.records[k].timestamp, s.records[j].timestamp);
    EXPECT_LT(s.records[b[i] - 1].timestamp, s.records[b[i]].timestamp);
  }
}

TEST(Partition, MergeEqualsWhole) {
  const std::vector<std::uint64_t> windows{1, 3, 6};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = testing::random_stream(seed + 500, 8000);
    const auto whole = sweep_windows(s, windows);
    for (unsigned threads : {2u, 3u, 8u, 64u}) {
      EXPECT_EQ(sweep_windows_parallel(s, windows, threads), whole) << threads;
    }
  }
}

TEST(Histogram, MergeAndZeroBin) {
  MultiplicityHistogram a, b;
  a.window_ticks = b.window_ticks = 2;
  a.counts = {0, 3, 1, 0, 0};
  a.opportunities = 10;
  b.counts = {0, 1, 0, 0, 1};
  b.opportunities = 5;
  a += b;
  a.derive_zero_bin();
  EXPECT_EQ(a.counts, (Counts{9, 4, 1, 0, 1}));
  MultiplicityHistogram c;
  c.window_ticks = 3;
  EXPECT_THROW(a += c, DomainError);
  MultiplicityHistogram bad;
  bad.counts = {0, 5, 0, 0, 0};
  bad.opportunities = 2;
  EXPECT_THROW(bad.derive_zero_bin(), DomainError);
}

TEST(Histogram, CsvLayout) {
  MultiplicityHistogram h;
  h.window_ticks = 1;
  h.counts = {7, 2, 1, 0, 0};
  h.opportunities = 10;
  std::ostringstream out;
  write_histogram_csv(out, std::span(&h, 1));
  EXPECT_EQ(out.str(),
            "window_ticks,n,count,opportunities\n1,0,7,10\n1,1,2,10\n1,2,1,10\n1,3,0,10\n1,4,0,10\n");
}

}  // namespace
}  // namespace spdc
