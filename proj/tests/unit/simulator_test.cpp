#include "spdcstat/simulator.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "spdcstat/coincidence.hpp"
#include "spdcstat/errors.hpp"
#include "spdcstat/fitting.hpp"

namespace spdc {
namespace {

SourceConfig fixed_source(const PhotonNumberModel& m, std::uint64_t pulses) {
  SourceConfig s;
  s.pulse_count = pulses;
  s.source_model = m;
  s.spectral_model.reset();
  return s;
}

DetectorConfig ideal_detectors() {
  DetectorConfig d;
  d.eta_setup = 1.0;
  d.irf.rising_sigma_ps = 1.0;
  d.irf.tail_tau_ps = 1.0;
  return d;
}

std::uint64_t detector_records(const TagStream& s) {
  std::uint64_t n = 0;
  for (const auto& r : s.records) n += r.channel != s.header.reference_channel;
  return n;
}

TEST(SpectralModel, Anchors) {
  const auto m = default_spectral_model();
  EXPECT_NEAR(m.mean_photon_number(787, 39), 0.0037, 1e-15);
  EXPECT_NEAR(m.mean_photon_number(787, 14), 0.00054, 1e-15);
  EXPECT_NEAR(m.mean_photon_number(819, 39), 0.0012, 1e-15);
  EXPECT_NEAR(m.mean_photon_number(819, 14), 0.00036, 1e-15);
  EXPECT_NEAR(m.mean_photon_number(787, 39) / m.mean_photon_number(787, 14), 6.85, 0.01);
}

TEST(SpectralModel, FullGrid) {
  const auto m = default_spectral_model();
  EXPECT_EQ(m.points().size(), 40u);
  for (double wl : kWavelengthSettingsNm) {
    double previous = 0.0;
    for (double p : kPumpPowersMw) {
      const double v = m.mean_photon_number(wl, p);
      EXPECT_GT(v, previous);
      previous = v;
    }
  }
  EXPECT_FALSE(m.contains(800, 39));
  EXPECT_THROW(m.mean_photon_number(800, 39), DomainError);
}

TEST(SpectralModel, PowerLaw) {
  const auto law = power_law_through(10, 1e-3, 40, 1.6e-2);
  EXPECT_NEAR(law.exponent, 2.0, 1e-12);
  EXPECT_NEAR(law(20), 4e-3, 1e-15);
  EXPECT_THROW(power_law_through(10, 1e-3, 10, 2e-3), DomainError);
  SpectralModel m;
  EXPECT_THROW(m.set(800, 10, -1), DomainError);
}

TEST(Irf, DefaultWidth) {
  const auto irf = default_irf();
  EXPECT_NEAR(irf_fwhm_ps(irf.rising_sigma_ps, irf.tail_tau_ps), 658.0, 1e-6);
  EXPECT_NEAR(irf.tail_tau_ps / irf.rising_sigma_ps, 3.0, 1e-12);
  // Pure Gaussian limit.
  EXPECT_NEAR(irf_fwhm_ps(100.0, 1e-6), 2.0 * std::sqrt(2.0 * std::log(2.0)) * 100.0, 1e-2);
}

TEST(Config, Validation) {
  DetectorConfig d;
  d.eta_setup = 0.0;
  EXPECT_THROW(d.validate(), DomainError);
  d = DetectorConfig{};
  d.irf.tail_tau_ps = 0.0;
  EXPECT_THROW(d.validate(), DomainError);
  d = DetectorConfig{};
  d.dark_rate_per_channel_hz = -1;
  EXPECT_THROW(d.validate(), DomainError);
  SourceConfig s;
  s.repetition_rate_hz = 0.0;
  EXPECT_THROW(s.validate(), DomainError);
  SimulationSetting missing;
  missing.wavelength_nm = 800;
  EXPECT_THROW(simulate(SourceConfig{}, DetectorConfig{}, missing), DomainError);
}

TEST(Simulate, ZeroMeanOnlyReferences) {
  const auto s = simulate(fixed_source(PhotonNumberModel::thermal(0.0), 100000), DetectorConfig{},
                          SimulationSetting{});
  ASSERT_EQ(s.records.size(), 100000u);
  for (const auto& r : s.records) EXPECT_EQ(r.channel, 0);
  const auto h = count_coincidences(s, 1);
  EXPECT_EQ(h.counts[0], 100000u);
}

TEST(Simulate, ReferenceTimesFollowRepetitionRate) {
  const auto s = simulate(fixed_source(PhotonNumberModel::thermal(0.0), 10), DetectorConfig{},
                          SimulationSetting{});
  // 4 us period = 24242.42 ticks of 165 ps.
  EXPECT_EQ(s.records[1].timestamp, 24242u);
  EXPECT_EQ(s.records[3].timestamp, 72727u);
  EXPECT_NEAR(s.header.acquisition_seconds, 40e-6, 1e-15);
}

TEST(Simulate, Deterministic) {
  const auto src = fixed_source(PhotonNumberModel::thermal(0.05), 200000);
  DetectorConfig det;
  det.dark_rate_per_channel_hz = 500;
  det.dead_time_ns = 50;
  const auto a = simulate(src, det, {787, 39, 42});
  const auto b = simulate(src, det, {787, 39, 42});
  const auto c = simulate(src, det, {787, 39, 43});
  EXPECT_EQ(a.records, b.records);
  EXPECT_NE(a.records, c.records);
}

TEST(Simulate, ThreadCountInvariant) {
  const auto src = fixed_source(PhotonNumberModel::convolution(0.02, 0.03), 300000);
  DetectorConfig det;
  det.dark_rate_per_channel_hz = 2000;
  const auto one = simulate(src, det, {787, 39, 5}, 1);
  for (unsigned t : {2u, 3u, 8u}) EXPECT_EQ(simulate(src, det, {787, 39, 5}, t).records, one.records);
}

TEST(Simulate, StreamIsValidPtg1) {
  const auto src = fixed_source(PhotonNumberModel::thermal(0.2), 150000);
  DetectorConfig det;
  det.dark_rate_per_channel_hz = 1e4;
  const auto s = simulate(src, det, {787, 39, 9});
  EXPECT_EQ(parse(serialize(s)).records, s.records);
}

TEST(Simulate, SpectralMeanUsed) {
  const SourceConfig src;
  EXPECT_NEAR(mean(source_model_for(src, {787, 39, 1})), 0.0037, 1e-15);
  EXPECT_EQ(source_model_for(src, {787, 39, 1}).kind(), ModelKind::Thermal);
}

TEST(Simulate, DefaultSettingProducesDetections) {
  SourceConfig src;
  src.pulse_count = 200000;
  const auto summary = simulate_to(src, DetectorConfig{}, {787, 39, 1}, [](auto) {});
  EXPECT_GT(summary.detector_events, 0u);
}

TEST(Simulate, PoissonOccupancy) {
  const std::uint64_t pulses = 1'000'000;
  const auto s = simulate(fixed_source(PhotonNumberModel::poisson(0.01), pulses),
                          ideal_detectors(), {787, 39, 3});
  const auto h = count_coincidences(s, 1);
  const double fraction = 1.0 - double(h.counts[0]) / double(pulses);
  const double expected = 1.0 - std::exp(-0.01);
  EXPECT_NEAR(fraction, expected, 5 * std::sqrt(expected * (1 - expected) / pulses));
}

TEST(Simulate, DarkCountLinearity) {
  for (double rate : {200.0, 1000.0, 5000.0}) {
    DetectorConfig det;
    det.dark_rate_per_channel_hz = rate;
    const auto src = fixed_source(PhotonNumberModel::thermal(0.0), 1'000'000);
    const auto s = simulate(src, det, {787, 39, 17});
    const double expected = 4 * rate * s.header.acquisition_seconds;
    EXPECT_NEAR(double(detector_records(s)), expected, 5 * std::sqrt(expected)) << rate;
  }
}

TEST(Simulate, DeadTimeDropsCloseEvents) {
  // Every photon lands on the same instant, so within-channel repeats collide.
  const auto src = fixed_source(PhotonNumberModel::poisson(3.0), 20000);
  DetectorConfig det = ideal_detectors();
  const auto free_run = simulate_to(src, det, {787, 39, 2}, [](auto) {});
  det.dead_time_ns = 100;
  const auto dead = simulate_to(src, det, {787, 39, 2}, [](auto) {});
  EXPECT_EQ(free_run.dead_time_losses, 0u);
  EXPECT_GT(dead.dead_time_losses, 0u);
  EXPECT_EQ(dead.detector_events + dead.dead_time_losses, free_run.detector_events);
  // At most one event per channel per pulse survives.
  EXPECT_LE(dead.detector_events, 4u * 20000u);
}

TEST(Simulate, EndToEndRecoversSourceMean) {
  const double truth = 0.01;
  const auto src = fixed_source(PhotonNumberModel::thermal(truth), 200000);
  const auto factors = correction_factors(NetworkConfig{});
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = simulate(src, ideal_detectors(), {787, 39, seed});
    const auto probs = correct(count_coincidences(s, 50), {1.0, 0.0}, factors);
    const auto f = fit(probs.corrected, ModelKind::NegativeBinomial);
    EXPECT_NEAR(f.mean_photon_number, truth, 5 * f.mean_uncertainty) << seed;
  }
}

}  // namespace
}  // namespace spdc
