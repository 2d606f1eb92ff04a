#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "spdcstat/distributions.hpp"
#include "spdcstat/spectral_model.hpp"
#include "spdcstat/tagstream.hpp"

namespace spdc {

/// Detector timing response: Gaussian rising edge convolved with an
/// exponential tail (exponentially modified Gaussian), shifted by a fixed
/// delay after the laser pulse.
struct IrfConfig {
  double rising_sigma_ps = 0.0;
  double tail_tau_ps = 0.0;
  double delay_ps = 2000.0;
};

/// Full width at half maximum of the exponentially modified Gaussian.
double irf_fwhm_ps(double rising_sigma_ps, double tail_tau_ps);

/// IRF with the requested FWHM and tail_tau / rising_sigma ratio.
IrfConfig irf_from_fwhm(double fwhm_ps, double tail_to_rise_ratio);

/// 0.658 ns FWHM, tail/rise 3:1.
IrfConfig default_irf();

struct SourceConfig {
  double repetition_rate_hz = 250e3;
  std::uint64_t pulse_count = 1'000'000;
  /// Photon-number family. With a spectral model its mean is replaced by the
  /// table entry for the simulated setting; without one it is used as is.
  PhotonNumberModel source_model = PhotonNumberModel::thermal(0.0);
  std::optional<SpectralModel> spectral_model = default_spectral_model();

  void validate() const;
};

struct DetectorConfig {
  double eta_setup = 0.12;
  double dark_rate_per_channel_hz = 0.0;
  IrfConfig irf = default_irf();
  double dead_time_ns = 0.0;
  std::uint32_t tick_picoseconds = kDefaultTickPicoseconds;

  void validate() const;
};

struct SimulationSetting {
  double wavelength_nm = 787.0;
  double power_mw = 39.0;
  std::uint64_t seed = 1;
};

struct SimulationSummary {
  std::uint64_t pulses = 0;
  std::uint64_t detector_events = 0;
  std::uint64_t dark_events = 0;
  std::uint64_t dead_time_losses = 0;
  double source_mean = 0.0;
};

/// Receives records in time order, one block of pulses at a time.
using RecordSink = std::function<void(std::span<const TagRecord>)>;

TagStreamHeader simulation_header(const SourceConfig& source, const DetectorConfig& detectors);

/// Photon-number model used for a setting (spectral mean applied).
PhotonNumberModel source_model_for(const SourceConfig& source, const SimulationSetting& setting);

/// Streams the synthetic acquisition into `sink`.
///
/// Pulses are generated in fixed-size blocks, each seeded from (seed, block
/// index), so the output is identical for every `threads` value.
SimulationSummary simulate_to(const SourceConfig& source, const DetectorConfig& detectors,
                              const SimulationSetting& setting, const RecordSink& sink,
                              unsigned threads = 1);

TagStream simulate(const SourceConfig& source, const DetectorConfig& detectors,
                   const SimulationSetting& setting, unsigned threads = 1);

}  // namespace spdc
