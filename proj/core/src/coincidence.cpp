#include "spdcstat/coincidence.hpp"

#include <algorithm>
#include <bit>
#include <exception>
#include <limits>
#include <ostream>
#include <string>
#include <thread>

#include "spdcstat/errors.hpp"

namespace spdc {

std::uint64_t MultiplicityHistogram::events() const noexcept {
  std::uint64_t total = 0;
  for (int n = 1; n <= kMaxMultiplicity; ++n) total += counts[n];
  return total;
}

void MultiplicityHistogram::derive_zero_bin() {
  const auto e = events();
  if (e > opportunities) {
    throw DomainError("histogram has " + std::to_string(e) + " events but only " +
                      std::to_string(opportunities) + " opportunities");
  }
  counts[0] = opportunities - e;
}

MultiplicityHistogram& MultiplicityHistogram::operator+=(const MultiplicityHistogram& other) {
  if (window_ticks != other.window_ticks) {
    throw DomainError("cannot merge histograms for different windows");
  }
  for (std::size_t n = 0; n < counts.size(); ++n) counts[n] += other.counts[n];
  opportunities += other.opportunities;
  return *this;
}

// ---------------------------------------------------------------------------

CoincidenceCounter::CoincidenceCounter(const TagStreamHeader& header,
                                       std::span<const std::uint64_t> windows)
    : windows_(windows.begin(), windows.end()), reference_channel_(header.reference_channel) {
  if (windows_.empty()) throw DomainError("at least one coincidence window is required");
  for (auto w : windows_) {
    if (w < 1) throw DomainError("coincidence window must be >= 1 tick");
  }
  detector_bit_.fill(-1);
  const auto detectors = header.detector_channels();
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    detector_bit_[detectors[i]] = static_cast<std::int8_t>(i);
  }
  hist_.resize(windows_.size());
  for (std::size_t i = 0; i < windows_.size(); ++i) hist_[i].window_ticks = windows_[i];
  pulse_events_.reserve(64);
}

void CoincidenceCounter::push(const TagRecord& r) {
  if (index_ > 0 && r.timestamp < last_timestamp_) {
    throw CorruptionError(index_, "timestamp " + std::to_string(r.timestamp) +
                                      " precedes previous " + std::to_string(last_timestamp_));
  }
  last_timestamp_ = r.timestamp;

  if (r.channel == reference_channel_) {
    if (have_reference_) {
      close_pulse();
    } else {
      // Nothing before the first reference is counted; keep only events that
      // tie with it, they belong to its interval.
      std::erase_if(pulse_events_, [&](const TagRecord& e) { return e.timestamp < r.timestamp; });
    }
    have_reference_ = true;
    current_reference_ = r.timestamp;
    for (auto& h : hist_) ++h.opportunities;
  } else if (detector_bit_[r.channel] >= 0) {
    if (!have_reference_ && !pulse_events_.empty() &&
        pulse_events_.back().timestamp < r.timestamp) {
      pulse_events_.clear();
    }
    pulse_events_.push_back(r);
  } else {
    throw CorruptionError(index_, "unknown channel " + std::to_string(r.channel));
  }
  ++index_;
}

void CoincidenceCounter::push(std::span<const TagRecord> records) {
  for (const auto& r : records) push(r);
}

// Closes the pulse started at current_reference_ because a new reference
// arrived at last_timestamp_. Detector events tying with the new reference
// move on to the new pulse.
void CoincidenceCounter::close_pulse() {
  const auto cut = std::partition_point(
      pulse_events_.begin(), pulse_events_.end(),
      [&](const TagRecord& e) { return e.timestamp < last_timestamp_; });
  if (cut != pulse_events_.begin()) {
    const std::uint64_t anchor = pulse_events_.front().timestamp;
    for (std::size_t w = 0; w < windows_.size(); ++w) {
      unsigned mask = 0;
      for (auto it = pulse_events_.begin(); it != cut; ++it) {
        if (it->timestamp - anchor > windows_[w]) break;
        mask |= 1u << detector_bit_[it->channel];
      }
      const int n = std::min(std::popcount(mask), kMaxMultiplicity);
      ++hist_[w].counts[n];
    }
  }
  pulse_events_.erase(pulse_events_.begin(), cut);
}

std::vector<MultiplicityHistogram> CoincidenceCounter::finish() {
  if (have_reference_) {
    // The final pulse extends to the end of the stream.
    last_timestamp_ = std::numeric_limits<std::uint64_t>::max();
    close_pulse();
  }
  pulse_events_.clear();
  have_reference_ = false;
  auto out = hist_;
  for (auto& h : out) h.derive_zero_bin();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void require_opportunities(const std::vector<MultiplicityHistogram>& hists) {
  if (hists.empty() || hists.front().opportunities == 0) {
    throw EmptyOpportunitiesError("stream contains no reference pulses");
  }
}

}  // namespace

MultiplicityHistogram count_coincidences(const TagStream& stream, std::uint64_t window) {
  const std::uint64_t windows[] = {window};
  return sweep_windows(stream, windows).front();
}

std::vector<MultiplicityHistogram> sweep_windows(const TagStream& stream,
                                                 std::span<const std::uint64_t> windows) {
  CoincidenceCounter counter(stream.header, windows);
  counter.push(stream.records);
  auto out = counter.finish();
  require_opportunities(out);
  return out;
}

std::vector<MultiplicityHistogram> sweep_windows(TagReader& reader,
                                                 std::span<const std::uint64_t> windows) {
  CoincidenceCounter counter(reader.header(), windows);
  std::vector<TagRecord> batch;
  while (reader.next_batch(batch)) counter.push(batch);
  auto out = counter.finish();
  require_opportunities(out);
  return out;
}

std::vector<std::size_t> partition_at_pulses(const TagStream& stream, std::size_t parts) {
  const auto& recs = stream.records;
  const auto ref = stream.header.reference_channel;
  std::vector<std::size_t> bounds{0};
  if (parts == 0) parts = 1;
  for (std::size_t k = 1; k < parts; ++k) {
    std::size_t j = std::max(bounds.back() + 1, recs.size() * k / parts);
    while (j < recs.size() && recs[j].channel != ref) ++j;
    if (j >= recs.size()) break;
    while (j > bounds.back() + 1 && recs[j - 1].timestamp == recs[j].timestamp) --j;
    if (j > bounds.back()) bounds.push_back(j);
  }
  bounds.push_back(recs.size());
  return bounds;
}

std::vector<MultiplicityHistogram> sweep_windows_parallel(const TagStream& stream,
                                                          std::span<const std::uint64_t> windows,
                                                          unsigned threads) {
  if (threads <= 1) return sweep_windows(stream, windows);
  const auto bounds = partition_at_pulses(stream, threads);
  const std::size_t parts = bounds.size() - 1;

  std::vector<std::vector<MultiplicityHistogram>> partial(parts);
  std::vector<std::exception_ptr> errors(parts);
  {
    std::vector<std::jthread> workers;
    workers.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
      workers.emplace_back([&, p] {
        try {
          CoincidenceCounter counter(stream.header, windows);
          counter.push(std::span<const TagRecord>(stream.records)
                           .subspan(bounds[p], bounds[p + 1] - bounds[p]));
          partial[p] = counter.finish();
        } catch (...) {
          errors[p] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto merged = partial.front();
  for (std::size_t p = 1; p < parts; ++p) {
    for (std::size_t w = 0; w < merged.size(); ++w) merged[w] += partial[p][w];
  }
  require_opportunities(merged);
  return merged;
}

void write_histogram_csv(std::ostream& out, std::span<const MultiplicityHistogram> histograms) {
  out << "window_ticks,n,count,opportunities\n";
  for (const auto& h : histograms) {
    for (int n = 0; n <= kMaxMultiplicity; ++n) {
      out << h.window_ticks << ',' << n << ',' << h.counts[n] << ',' << h.opportunities << '\n';
    }
  }
}

}  // namespace spdc
