#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "spdcstat/tagstream.hpp"

namespace spdc {

/// Highest multiplicity bin; it holds events on four or more detectors.
inline constexpr int kMaxMultiplicity = 4;

/// Per-acquisition event counts by multiplicity n = 0, 1, 2, 3, 4+.
struct MultiplicityHistogram {
  std::uint64_t window_ticks = 0;
  std::array<std::uint64_t, kMaxMultiplicity + 1> counts{};
  std::uint64_t opportunities = 0;

  /// Sum of counts[1..4].
  std::uint64_t events() const noexcept;
  /// counts[0] = opportunities - events(). Throws DomainError if events exceed opportunities.
  void derive_zero_bin();

  /// Element-wise merge of histograms for the same window.
  MultiplicityHistogram& operator+=(const MultiplicityHistogram& other);

  friend bool operator==(const MultiplicityHistogram&, const MultiplicityHistogram&) = default;
};

/// Streaming clustering engine.
///
/// Detector events are assigned to the reference pulse whose half-open
/// interval [t_ref_k, t_ref_k+1) contains them; events before the first
/// reference are discarded. Within a pulse the earliest detector event is
/// the anchor, and the multiplicity is the number of distinct detector
/// channels with an event at most `window` ticks after the anchor.
///
/// Memory is bounded by the number of detector events inside one pulse.
class CoincidenceCounter {
 public:
  /// Throws DomainError if `windows` is empty or contains a 0.
  CoincidenceCounter(const TagStreamHeader& header, std::span<const std::uint64_t> windows);

  /// Records must arrive in non-decreasing time order. Throws CorruptionError
  /// for out-of-order records or unknown channels.
  void push(const TagRecord& record);
  void push(std::span<const TagRecord> records);

  /// Closes the last pulse and returns one histogram per window, in the
  /// order given at construction. Does not require any reference pulse.
  std::vector<MultiplicityHistogram> finish();

 private:
  void close_pulse();

  std::vector<std::uint64_t> windows_;
  std::array<std::int8_t, 256> detector_bit_{};
  std::uint8_t reference_channel_;
  std::vector<TagRecord> pulse_events_;
  std::vector<MultiplicityHistogram> hist_;
  bool have_reference_ = false;
  std::uint64_t current_reference_ = 0;
  std::uint64_t last_timestamp_ = 0;
  std::size_t index_ = 0;
};

/// Throws EmptyOpportunitiesError if the stream contains no reference pulse.
MultiplicityHistogram count_coincidences(const TagStream& stream, std::uint64_t window);

/// One histogram per window from a single pass.
std::vector<MultiplicityHistogram> sweep_windows(const TagStream& stream,
                                                 std::span<const std::uint64_t> windows);

/// Stream a PTG1 file through the engine without materializing it.
std::vector<MultiplicityHistogram> sweep_windows(TagReader& reader,
                                                 std::span<const std::uint64_t> windows);

/// Record indices at which the stream may be cut so that every part starts
/// at a reference pulse (ties on the reference timestamp stay with the
/// reference). Returns part boundaries including 0 and records.size().
std::vector<std::size_t> partition_at_pulses(const TagStream& stream, std::size_t parts);

/// Splits the stream at pulse boundaries, counts the parts on `threads`
/// worker threads and merges. Identical to sweep_windows.
std::vector<MultiplicityHistogram> sweep_windows_parallel(const TagStream& stream,
                                                          std::span<const std::uint64_t> windows,
                                                          unsigned threads);

/// CSV with header `window_ticks,n,count,opportunities`, one row per n; n = 4 is the 4+ bin.
void write_histogram_csv(std::ostream& out, std::span<const MultiplicityHistogram> histograms);

}  // namespace spdc
