#include "spdcstat/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <thread>

#include "spdcstat/errors.hpp"
#include "spdcstat/splitter_network.hpp"

namespace spdc {

namespace {

constexpr std::uint64_t kBlockPulses = 1u << 16;

struct Detection {
  double time_ps;
  std::uint8_t channel;
};

struct Block {
  std::vector<Detection> events;
  std::uint64_t dark_events = 0;
};

struct Plan {
  PhotonNumberModel model;
  double period_ps;
  double tick_ps;
  std::uint64_t pulses;
  std::uint64_t seed;
  std::array<std::uint8_t, kDetectorCount> channels;
  const DetectorConfig* det;
};

std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
  return std::mt19937_64(seq);
}

Block generate_block(const Plan& plan, std::uint64_t block) {
  auto rng = block_engine(plan.seed, block);
  const std::uint64_t first = block * kBlockPulses;
  const std::uint64_t last = std::min(first + kBlockPulses, plan.pulses);
  const auto& det = *plan.det;

  PhotonNumberSampler photons(plan.model);
  std::normal_distribution<double> rise(0.0, std::max(det.irf.rising_sigma_ps, 1e-300));
  std::exponential_distribution<double> tail(1.0 / std::max(det.irf.tail_tau_ps, 1e-300));
  std::uniform_int_distribution<int> route(0, kDetectorCount - 1);
  const bool use_rise = det.irf.rising_sigma_ps > 0.0;
  const bool use_tail = det.irf.tail_tau_ps > 0.0;

  Block out;
  for (std::uint64_t k = first; k < last; ++k) {
    const std::int64_t n = photons(rng);
    if (n == 0) continue;
    const std::int64_t detected =
        det.eta_setup >= 1.0 ? n : std::binomial_distribution<std::int64_t>(n, det.eta_setup)(rng);
    const double pulse_ps = static_cast<double>(k) * plan.period_ps;
    for (std::int64_t i = 0; i < detected; ++i) {
      const auto channel = plan.channels[route(rng)];
      double t = pulse_ps + det.irf.delay_ps;
      if (use_rise) t += rise(rng);
      if (use_tail) t += tail(rng);
      out.events.push_back({std::max(t, 0.0), channel});
    }
  }

  if (det.dark_rate_per_channel_hz > 0.0) {
    const double start_ps = static_cast<double>(first) * plan.period_ps;
    const double end_ps = static_cast<double>(last) * plan.period_ps;
    const double expected = det.dark_rate_per_channel_hz * (end_ps - start_ps) * 1e-12;
    std::poisson_distribution<std::int64_t> count(expected);
    std::uniform_real_distribution<double> when(start_ps, end_ps);
    for (auto channel : plan.channels) {
      const std::int64_t c = count(rng);
      for (std::int64_t i = 0; i < c; ++i) out.events.push_back({when(rng), channel});
      out.dark_events += static_cast<std::uint64_t>(c);
    }
  }

  std::sort(out.events.begin(), out.events.end(), [](const Detection& a, const Detection& b) {
    return a.time_ps < b.time_ps || (a.time_ps == b.time_ps && a.channel < b.channel);
  });
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

double irf_fwhm_ps(double sigma, double tau) {
  if (!(sigma > 0.0 && tau > 0.0)) throw DomainError("IRF parameters must be > 0");
  const double lambda = 1.0 / tau;
  // Exponentially modified Gaussian density with zero Gaussian centre, written
  // as exp(-x^2 / 2 sigma^2) * erfcx(z) so that short tails do not overflow.
  const auto erfcx = [](double z) {
    if (z < 25.0) return std::exp(z * z) * std::erfc(z);
    const double iz2 = 1.0 / (z * z);
    return (1.0 - 0.5 * iz2 + 0.75 * iz2 * iz2) / (z * std::sqrt(std::numbers::pi));
  };
  const auto pdf = [&](double x) {
    const double z = (lambda * sigma * sigma - x) / (std::sqrt(2.0) * sigma);
    return 0.5 * lambda * std::exp(-x * x / (2.0 * sigma * sigma)) * erfcx(z);
  };
  // Peak by golden-section search on [-3 sigma, 3 sigma + 3 tau].
  double a = -3.0 * sigma;
  double b = 3.0 * sigma + 3.0 * tau;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double c = b - g * (b - a);
    const double d = a + g * (b - a);
    if (pdf(c) > pdf(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  const double peak_x = 0.5 * (a + b);
  const double half = 0.5 * pdf(peak_x);
  const auto crossing = [&](double inside, double outside) {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (inside + outside);
      if (pdf(mid) > half) {
        inside = mid;
      } else {
        outside = mid;
      }
    }
    return 0.5 * (inside + outside);
  };
  const double left = crossing(peak_x, peak_x - 10.0 * sigma);
  const double right = crossing(peak_x, peak_x + 10.0 * sigma + 20.0 * tau);
  return right - left;
}

IrfConfig irf_from_fwhm(double fwhm_ps, double tail_to_rise_ratio) {
  if (!(fwhm_ps > 0.0 && tail_to_rise_ratio > 0.0)) {
    throw DomainError("IRF FWHM and tail/rise ratio must be > 0");
  }
  // The shape is fixed by the ratio, so the width scales linearly with sigma.
  const double unit = irf_fwhm_ps(1.0, tail_to_rise_ratio);
  IrfConfig irf;
  irf.rising_sigma_ps = fwhm_ps / unit;
  irf.tail_tau_ps = tail_to_rise_ratio * irf.rising_sigma_ps;
  return irf;
}

IrfConfig default_irf() { return irf_from_fwhm(658.0, 3.0); }

void SourceConfig::validate() const {
  if (!(repetition_rate_hz > 0.0) || !std::isfinite(repetition_rate_hz)) {
    throw DomainError("repetition rate must be > 0");
  }
  if (spectral_model) {
    for (const auto& p : spectral_model->points()) {
      if (!(p.mean_photon_number >= 0.0)) throw DomainError("spectral means must be >= 0");
    }
  }
}

void DetectorConfig::validate() const {
  if (!(eta_setup > 0.0 && eta_setup <= 1.0)) {
    throw DomainError("eta_setup must lie in (0, 1], got " + std::to_string(eta_setup));
  }
  if (!(dark_rate_per_channel_hz >= 0.0)) throw DomainError("dark rate must be >= 0");
  if (!(irf.rising_sigma_ps > 0.0 && irf.tail_tau_ps > 0.0)) {
    throw DomainError("IRF rising sigma and tail tau must be > 0");
  }
  if (!(irf.delay_ps >= 0.0)) throw DomainError("IRF delay must be >= 0");
  if (!(dead_time_ns >= 0.0)) throw DomainError("dead time must be >= 0");
  if (tick_picoseconds == 0) throw DomainError("tick must be > 0 ps");
}

TagStreamHeader simulation_header(const SourceConfig& source, const DetectorConfig& detectors) {
  TagStreamHeader h;
  h.tick_picoseconds = detectors.tick_picoseconds;
  h.reference_channel = 0;
  h.acquisition_seconds = static_cast<double>(source.pulse_count) / source.repetition_rate_hz;
  return h;
}

PhotonNumberModel source_model_for(const SourceConfig& source, const SimulationSetting& setting) {
  if (!source.spectral_model) return source.source_model;
  const double target =
      source.spectral_model->mean_photon_number(setting.wavelength_nm, setting.power_mw);
  if (target == 0.0 && source.source_model.kind() == ModelKind::NegativeBinomial) {
    return PhotonNumberModel::thermal(0.0);
  }
  return with_mean(source.source_model, target);
}

SimulationSummary simulate_to(const SourceConfig& source, const DetectorConfig& detectors,
                              const SimulationSetting& setting, const RecordSink& sink,
                              unsigned threads) {
  source.validate();
  detectors.validate();
  const TagStreamHeader header = simulation_header(source, detectors);

  Plan plan{source_model_for(source, setting),
            1e12 / source.repetition_rate_hz,
            static_cast<double>(detectors.tick_picoseconds),
            source.pulse_count,
            setting.seed,
            header.detector_channels(),
            &detectors};

  SimulationSummary summary;
  summary.pulses = source.pulse_count;
  summary.source_mean = mean(plan.model);

  const std::uint64_t blocks = (plan.pulses + kBlockPulses - 1) / kBlockPulses;
  const double dead_ps = detectors.dead_time_ns * 1e3;
  std::array<double, 256> last_kept;
  last_kept.fill(-std::numeric_limits<double>::infinity());

  const auto tick_of = [&](double t_ps) {
    return static_cast<std::uint64_t>(std::floor(t_ps / plan.tick_ps));
  };

  std::vector<Detection> carry;
  std::vector<Detection> merged;
  std::vector<TagRecord> out;
  const auto emit_block = [&](std::uint64_t b, Block& blk) {
    summary.dark_events += blk.dark_events;
    merged.clear();
    merged.reserve(carry.size() + blk.events.size());
    std::merge(carry.begin(), carry.end(), blk.events.begin(), blk.events.end(),
               std::back_inserter(merged), [](const Detection& a, const Detection& c) {
                 return a.time_ps < c.time_ps;
               });
    carry.clear();

    const std::uint64_t first = b * kBlockPulses;
    const std::uint64_t last = std::min(first + kBlockPulses, plan.pulses);
    const bool final_block = last == plan.pulses;
    const std::uint64_t boundary_tick =
        final_block ? std::numeric_limits<std::uint64_t>::max()
                    : tick_of(static_cast<double>(last) * plan.period_ps);

    out.clear();
    std::size_t e = 0;
    for (std::uint64_t k = first; k <= last; ++k) {
      const std::uint64_t ref_tick =
          k < last ? tick_of(static_cast<double>(k) * plan.period_ps) : boundary_tick;
      // Detector events strictly before this reference tick.
      while (e < merged.size()) {
        const std::uint64_t t = tick_of(merged[e].time_ps);
        if (t >= ref_tick) break;
        const auto& d = merged[e];
        if (d.time_ps - last_kept[d.channel] >= dead_ps) {
          last_kept[d.channel] = d.time_ps;
          out.push_back({t, d.channel});
          ++summary.detector_events;
        } else {
          ++summary.dead_time_losses;
        }
        ++e;
      }
      if (k < last) out.push_back({ref_tick, header.reference_channel});
    }
    carry.assign(merged.begin() + static_cast<std::ptrdiff_t>(e), merged.end());
    sink(out);
  };

  const unsigned workers = std::max(1u, threads);
  std::vector<Block> batch;
  for (std::uint64_t b0 = 0; b0 < blocks; b0 += workers) {
    const std::uint64_t count = std::min<std::uint64_t>(workers, blocks - b0);
    batch.assign(count, Block{});
    if (count == 1) {
      batch[0] = generate_block(plan, b0);
    } else {
      std::vector<std::jthread> pool;
      for (std::uint64_t i = 0; i < count; ++i) {
        pool.emplace_back([&, i] { batch[i] = generate_block(plan, b0 + i); });
      }
    }
    for (std::uint64_t i = 0; i < count; ++i) emit_block(b0 + i, batch[i]);
  }
  return summary;
}

TagStream simulate(const SourceConfig& source, const DetectorConfig& detectors,
                   const SimulationSetting& setting, unsigned threads) {
  TagStream stream;
  stream.header = simulation_header(source, detectors);
  stream.records.reserve(source.pulse_count + source.pulse_count / 8);
  simulate_to(
      source, detectors, setting,
      [&](std::span<const TagRecord> recs) {
        stream.records.insert(stream.records.end(), recs.begin(), recs.end());
      },
      threads);
  return stream;
}

}  // namespace spdc
