#include "spdcstat/tagstream.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "spdcstat/errors.hpp"

namespace spdc {

namespace {

std::uint32_t load_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint64_t load_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void store_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void store_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

TagStreamHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPtgHeaderSize) {
    throw FormatError("PTG1 header truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  if (!std::equal(kPtgMagic.begin(), kPtgMagic.end(), bytes.begin())) {
    throw FormatError("bad magic, not a PTG1 stream");
  }
  if (bytes[4] != kPtgVersion) {
    throw FormatError("unsupported PTG1 version " + std::to_string(bytes[4]));
  }
  if (bytes[5] != 0 || bytes[6] != 0) throw FormatError("PTG1 reserved bytes must be zero");
  if (bytes[7] != kPtgChannelCount) {
    throw FormatError("PTG1 channel count must be 5, got " + std::to_string(bytes[7]));
  }
  TagStreamHeader h;
  h.tick_picoseconds = load_u32(bytes.data() + 8);
  const std::uint32_t reference = load_u32(bytes.data() + 12);
  if (reference >= kPtgChannelCount) {
    throw FormatError("reference channel " + std::to_string(reference) + " out of range");
  }
  h.reference_channel = static_cast<std::uint8_t>(reference);
  h.validate();
  return h;
}

std::array<std::uint8_t, kPtgHeaderSize> encode_header(const TagStreamHeader& h) {
  h.validate();
  std::array<std::uint8_t, kPtgHeaderSize> out{};
  std::copy(kPtgMagic.begin(), kPtgMagic.end(), out.begin());
  out[4] = kPtgVersion;
  out[7] = kPtgChannelCount;
  store_u32(out.data() + 8, h.tick_picoseconds);
  store_u32(out.data() + 12, h.reference_channel);
  return out;
}

// Decodes and validates one record; `last` carries the ordering state.
TagRecord decode_record(const std::uint8_t* p, std::size_t index, std::uint64_t& last) {
  TagRecord r{load_u64(p), p[8]};
  if (r.channel >= kPtgChannelCount) {
    throw CorruptionError(index, "unknown channel " + std::to_string(r.channel));
  }
  if (index > 0 && r.timestamp < last) {
    throw CorruptionError(index, "timestamp " + std::to_string(r.timestamp) +
                                     " precedes previous " + std::to_string(last));
  }
  last = r.timestamp;
  return r;
}

}  // namespace

std::array<std::uint8_t, 4> TagStreamHeader::detector_channels() const {
  std::array<std::uint8_t, 4> out{};
  std::size_t k = 0;
  for (std::uint8_t ch = 0; ch < kPtgChannelCount; ++ch) {
    if (ch != reference_channel && k < out.size()) out[k++] = ch;
  }
  return out;
}

void TagStreamHeader::validate() const {
  if (tick_picoseconds == 0) throw FormatError("tick length must be > 0");
  if (reference_channel >= kPtgChannelCount) {
    throw FormatError("reference channel " + std::to_string(reference_channel) +
                      " out of range");
  }
}

TagStream parse(std::span<const std::uint8_t> bytes) {
  TagStream stream;
  stream.header = decode_header(bytes);
  const auto body = bytes.subspan(kPtgHeaderSize);
  const std::size_t full = body.size() / kPtgRecordSize;
  stream.records.reserve(full);
  std::uint64_t last = 0;
  for (std::size_t i = 0; i < full; ++i) {
    stream.records.push_back(decode_record(body.data() + i * kPtgRecordSize, i, last));
  }
  if (body.size() % kPtgRecordSize != 0) {
    throw CorruptionError(full, "truncated record (" +
                                    std::to_string(body.size() % kPtgRecordSize) + " of 9 bytes)");
  }
  if (!stream.records.empty()) {
    const auto span_ticks = stream.records.back().timestamp - stream.records.front().timestamp;
    stream.header.acquisition_seconds =
        static_cast<double>(span_ticks) * stream.header.tick_picoseconds * 1e-12;
  }
  return stream;
}

std::vector<std::uint8_t> serialize(const TagStream& stream) {
  std::vector<std::uint8_t> out;
  out.reserve(kPtgHeaderSize + stream.records.size() * kPtgRecordSize);
  const auto header = encode_header(stream.header);
  out.insert(out.end(), header.begin(), header.end());
  std::uint64_t last = 0;
  for (std::size_t i = 0; i < stream.records.size(); ++i) {
    const auto& r = stream.records[i];
    if (r.channel >= kPtgChannelCount) {
      throw CorruptionError(i, "unknown channel " + std::to_string(r.channel));
    }
    if (i > 0 && r.timestamp < last) throw CorruptionError(i, "timestamps out of order");
    last = r.timestamp;
    std::uint8_t rec[kPtgRecordSize];
    store_u64(rec, r.timestamp);
    rec[8] = r.channel;
    out.insert(out.end(), rec, rec + kPtgRecordSize);
  }
  return out;
}

TagStream read_ptg_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse(bytes);
}

void write_ptg_file(const std::string& path, const TagStream& stream) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot create " + path);
  const auto bytes = serialize(stream);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::ios_base::failure("write failed: " + path);
}

// ---------------------------------------------------------------------------

TagReader::TagReader(std::istream& in) : in_(in) {
  std::array<std::uint8_t, kPtgHeaderSize> raw{};
  in_.read(reinterpret_cast<char*>(raw.data()), raw.size());
  header_ = decode_header(std::span<const std::uint8_t>(raw.data(),
                                                        static_cast<std::size_t>(in_.gcount())));
}

bool TagReader::next_batch(std::vector<TagRecord>& out, std::size_t max_records) {
  out.clear();
  if (max_records == 0) max_records = 1;
  buffer_.resize(max_records * kPtgRecordSize);
  in_.read(reinterpret_cast<char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
  const auto got = static_cast<std::size_t>(in_.gcount());
  const std::size_t full = got / kPtgRecordSize;
  out.reserve(full);
  for (std::size_t i = 0; i < full; ++i) {
    out.push_back(decode_record(buffer_.data() + i * kPtgRecordSize, index_, last_timestamp_));
    ++index_;
  }
  if (got % kPtgRecordSize != 0) {
    throw CorruptionError(index_, "truncated record (" + std::to_string(got % kPtgRecordSize) +
                                      " of 9 bytes)");
  }
  return full > 0;
}

TagWriter::TagWriter(std::ostream& out, const TagStreamHeader& header) : out_(out) {
  const auto raw = encode_header(header);
  out_.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  buffer_.reserve(1 << 20);
}

TagWriter::~TagWriter() {
  try {
    if (!buffer_.empty()) flush();
  } catch (...) {
  }
}

void TagWriter::write(const TagRecord& r) {
  if (r.channel >= kPtgChannelCount) {
    throw CorruptionError(count_, "unknown channel " + std::to_string(r.channel));
  }
  if (count_ > 0 && r.timestamp < last_timestamp_) {
    throw CorruptionError(count_, "timestamps out of order");
  }
  last_timestamp_ = r.timestamp;
  std::uint8_t rec[kPtgRecordSize];
  store_u64(rec, r.timestamp);
  rec[8] = r.channel;
  buffer_.insert(buffer_.end(), rec, rec + kPtgRecordSize);
  ++count_;
  if (buffer_.size() >= (1 << 20)) flush();
}

void TagWriter::write(std::span<const TagRecord> records) {
  for (const auto& r : records) write(r);
}

void TagWriter::flush() {
  out_.write(reinterpret_cast<const char*>(buffer_.data()),
             static_cast<std::streamsize>(buffer_.size()));
  buffer_.clear();
  out_.flush();
  if (!out_) throw std::ios_base::failure("PTG1 write failed");
}

}  // namespace spdc
