#pragma once

// PTG1 time-tag container.
//
//   offset  size  field
//   0       4     magic "PTG1" (50 54 47 31)
//   4       1     version (1)
//   5       2     reserved, zero
//   7       1     channel count (5: one reference + four detectors)
//   8       4     tick length in picoseconds, u32 little-endian
//   12      4     reference channel id, u32 little-endian
//   16      9*k   records: u64 little-endian tick count, u8 channel
//
// Detector channels are the channel ids 0..4 other than the reference, in
// ascending order. Records are non-decreasing in time.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace spdc {

inline constexpr std::array<std::uint8_t, 4> kPtgMagic{0x50, 0x54, 0x47, 0x31};
inline constexpr std::uint8_t kPtgVersion = 1;
inline constexpr std::size_t kPtgHeaderSize = 16;
inline constexpr std::size_t kPtgRecordSize = 9;
inline constexpr std::uint8_t kPtgChannelCount = 5;
inline constexpr std::uint32_t kDefaultTickPicoseconds = 165;

struct TagRecord {
  std::uint64_t timestamp = 0;  // ticks
  std::uint8_t channel = 0;

  friend bool operator==(const TagRecord&, const TagRecord&) = default;
};

struct TagStreamHeader {
  std::uint32_t tick_picoseconds = kDefaultTickPicoseconds;
  std::uint8_t reference_channel = 0;
  /// Not stored in PTG1; parse() derives it from the record time span.
  double acquisition_seconds = 0.0;

  /// Ascending channel ids other than the reference.
  std::array<std::uint8_t, 4> detector_channels() const;
  /// Throws FormatError on tick == 0 or a reference channel outside 0..4.
  void validate() const;

  friend bool operator==(const TagStreamHeader&, const TagStreamHeader&) = default;
};

struct TagStream {
  TagStreamHeader header;
  std::vector<TagRecord> records;
};

/// Decode a complete PTG1 image. Throws FormatError on header problems and
/// CorruptionError (with record index) on truncation, unknown channels or
/// decreasing timestamps.
TagStream parse(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize(const TagStream& stream);

TagStream read_ptg_file(const std::string& path);
void write_ptg_file(const std::string& path, const TagStream& stream);

/// Incremental PTG1 decoder over an input stream; holds one batch in memory.
class TagReader {
 public:
  explicit TagReader(std::istream& in);

  const TagStreamHeader& header() const noexcept { return header_; }

  /// Replace `out` with up to `max_records` validated records. Returns false
  /// once the input is exhausted.
  bool next_batch(std::vector<TagRecord>& out, std::size_t max_records = 1 << 16);

  std::size_t records_read() const noexcept { return index_; }

 private:
  std::istream& in_;
  TagStreamHeader header_;
  std::vector<std::uint8_t> buffer_;
  std::size_t index_ = 0;
  std::uint64_t last_timestamp_ = 0;
};

/// Incremental PTG1 encoder. Enforces channel range and time ordering.
class TagWriter {
 public:
  TagWriter(std::ostream& out, const TagStreamHeader& header);
  ~TagWriter();
  TagWriter(const TagWriter&) = delete;
  TagWriter& operator=(const TagWriter&) = delete;

  void write(const TagRecord& record);
  void write(std::span<const TagRecord> records);
  void flush();

  std::size_t records_written() const noexcept { return count_; }

 private:
  std::ostream& out_;
  std::vector<std::uint8_t> buffer_;
  std::size_t count_ = 0;
  std::uint64_t last_timestamp_ = 0;
};

}  // namespace spdc
