#include "spdcstat/tagstream.hpp"

#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "spdcstat/errors.hpp"
#include "support/brute_force.hpp"

namespace spdc {
namespace {

std::vector<std::uint8_t> header_bytes(std::uint32_t tick = 165, std::uint32_t ref = 0) {
  TagStream s;
  s.header.tick_picoseconds = tick;
  s.header.reference_channel = static_cast<std::uint8_t>(ref);
  return serialize(s);
}

void append_record(std::vector<std::uint8_t>& bytes, std::uint64_t t, std::uint8_t ch) {
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(t >> (8 * i)));
  bytes.push_back(ch);
}

TEST(Ptg1, HeaderLayout) {
  const auto b = header_bytes(165, 2);
  const std::vector<std::uint8_t> expected{0x50, 0x54, 0x47, 0x31, 1, 0, 0, 5,
                                           165,  0,    0,    0,    2, 0, 0, 0};
  EXPECT_EQ(b, expected);
}

TEST(Ptg1, RecordLayoutIsLittleEndian) {
  TagStream s;
  s.records = {{0x0102030405060708ull, 3}};
  const auto b = serialize(s);
  ASSERT_EQ(b.size(), kPtgHeaderSize + kPtgRecordSize);
  const std::vector<std::uint8_t> rec(b.begin() + kPtgHeaderSize, b.end());
  EXPECT_EQ(rec, (std::vector<std::uint8_t>{8, 7, 6, 5, 4, 3, 2, 1, 3}));
}

TEST(Ptg1, EmptyRecordSection) {
  const auto s = parse(header_bytes());
  EXPECT_TRUE(s.records.empty());
  EXPECT_EQ(s.header.tick_picoseconds, 165u);
  EXPECT_EQ(s.header.acquisition_seconds, 0.0);
}

TEST(Ptg1, RoundTripIsLossless) {
  for (std::uint8_t ref = 0; ref < 5; ++ref) {
    auto s = testing::random_stream(ref + 1, 5000, ref);
    s.header.tick_picoseconds = 81;
    s.records.push_back({~0ull, ref});
    const auto bytes = serialize(s);
    const auto back = parse(bytes);
    EXPECT_EQ(back.records, s.records);
    EXPECT_EQ(back.header.tick_picoseconds, 81u);
    EXPECT_EQ(back.header.reference_channel, ref);
    EXPECT_EQ(serialize(back), bytes);
  }
}

TEST(Ptg1, AcquisitionSecondsFromSpan) {
  TagStream s;
  s.records = {{1000, 0}, {1000 + 1'000'000, 0}};
  const auto back = parse(serialize(s));
  EXPECT_NEAR(back.header.acquisition_seconds, 1e6 * 165e-12, 1e-18);
}

TEST(Ptg1, DetectorChannelsSkipReference) {
  TagStreamHeader h;
  h.reference_channel = 2;
  EXPECT_EQ(h.detector_channels(), (std::array<std::uint8_t, 4>{0, 1, 3, 4}));
}

TEST(Ptg1, BadMagic) {
  auto b = header_bytes();
  b[0] = 'X';
  EXPECT_THROW(parse(b), FormatError);
  try {
    parse(b);
  } catch (const CorruptionError&) {
    FAIL() << "bad magic must be a plain format error";
  } catch (const FormatError&) {
  }
}

TEST(Ptg1, HeaderErrors) {
  auto version = header_bytes();
  version[4] = 2;
  EXPECT_THROW(parse(version), FormatError);
  auto reserved = header_bytes();
  reserved[6] = 1;
  EXPECT_THROW(parse(reserved), FormatError);
  auto channels = header_bytes();
  channels[7] = 4;
  EXPECT_THROW(parse(channels), FormatError);
  auto tick = header_bytes();
  tick[8] = 0;
  EXPECT_THROW(parse(tick), FormatError);
  EXPECT_THROW(parse(header_bytes(165, 5)), FormatError);
  auto short_header = header_bytes();
  short_header.resize(10);
  EXPECT_THROW(parse(short_header), FormatError);
}

TEST(Ptg1, UnknownChannelNamesRecord) {
  auto b = header_bytes();
  append_record(b, 0, 0);
  append_record(b, 5, 1);
  append_record(b, 6, 9);
  try {
    parse(b);
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_EQ(e.record_index(), 2u);
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos);
  }
}

TEST(Ptg1, OutOfOrderNamesRecord) {
  auto b = header_bytes();
  append_record(b, 10, 0);
  append_record(b, 12, 1);
  append_record(b, 12, 2);
  append_record(b, 11, 3);
  try {
    parse(b);
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_EQ(e.record_index(), 3u);
  }
}

TEST(Ptg1, TruncatedRecord) {
  auto b = header_bytes();
  append_record(b, 10, 0);
  append_record(b, 12, 1);
  b.resize(b.size() - 4);
  try {
    parse(b);
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_EQ(e.record_index(), 1u);
  }
}

TEST(Ptg1, SerializeRejectsInvalidRecords) {
  TagStream s;
  s.records = {{5, 0}, {4, 1}};
  EXPECT_THROW(serialize(s), CorruptionError);
  s.records = {{5, 7}};
  EXPECT_THROW(serialize(s), CorruptionError);
}

TEST(TagReaderWriter, StreamingMatchesWholeImage) {
  const auto s = testing::random_stream(77, 20000);
  std::stringstream io(std::ios::in | std::ios::out | std::ios::binary);
  {
    TagWriter w(io, s.header);
    for (std::size_t i = 0; i < s.records.size(); i += 333) {
      w.write(std::span(s.records).subspan(i, std::min<std::size_t>(333, s.records.size() - i)));
    }
    EXPECT_EQ(w.records_written(), s.records.size());
  }
  const std::string image = io.str();
  const auto whole = serialize(s);
  EXPECT_EQ(image, std::string(whole.begin(), whole.end()));

  std::istringstream in(image, std::ios::binary);
  TagReader r(in);
  std::vector<TagRecord> all, batch;
  while (r.next_batch(batch, 1000)) all.insert(all.end(), batch.begin(), batch.end());
  EXPECT_EQ(all, s.records);
  EXPECT_EQ(r.records_read(), s.records.size());
}

TEST(TagReaderWriter, ReaderReportsErrors) {
  auto b = header_bytes();
  append_record(b, 10, 0);
  append_record(b, 9, 1);
  std::istringstream in(std::string(b.begin(), b.end()), std::ios::binary);
  TagReader r(in);
  std::vector<TagRecord> batch;
  EXPECT_THROW(r.next_batch(batch), CorruptionError);

  std::istringstream bad("NOPE", std::ios::binary);
  EXPECT_THROW(TagReader{bad}, FormatError);
}

TEST(TagReaderWriter, WriterEnforcesOrder) {
  std::ostringstream out(std::ios::binary);
  TagWriter w(out, TagStreamHeader{});
  w.write({5, 0});
  EXPECT_THROW(w.write({4, 1}), CorruptionError);
  EXPECT_THROW(w.write({6, 5}), CorruptionError);
}

TEST(Ptg1, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "spdcstat_tagstream_test.ptg";
  const auto s = testing::random_stream(5, 1000);
  write_ptg_file(path.string(), s);
  EXPECT_EQ(read_ptg_file(path.string()).records, s.records);
  std::filesystem::remove(path);
  EXPECT_THROW(read_ptg_file(path.string()), std::ios_base::failure);
}

}  // namespace
}  // namespace spdc
