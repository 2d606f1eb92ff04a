#pragma once

#include <array>
#include <vector>

namespace spdc {

/// Grating centre wavelengths of the measurement grid, nm.
inline constexpr std::array<double, 10> kWavelengthSettingsNm{783, 787, 791, 795, 799,
                                                              803, 807, 811, 815, 819};
/// Average pump powers of the measurement grid, mW.
inline constexpr std::array<double, 4> kPumpPowersMw{14, 25, 33, 39};

struct SpectralPoint {
  double wavelength_nm = 0.0;
  double power_mw = 0.0;
  double mean_photon_number = 0.0;
};

/// Mean photon number per pulse for each (wavelength, pump power) setting.
class SpectralModel {
 public:
  /// Inserts or replaces a setting. Throws DomainError for a negative mean.
  void set(double wavelength_nm, double power_mw, double mean_photon_number);

  /// Throws DomainError if the setting is absent (matched to 1e-6).
  double mean_photon_number(double wavelength_nm, double power_mw) const;
  bool contains(double wavelength_nm, double power_mw) const;

  const std::vector<SpectralPoint>& points() const noexcept { return points_; }

 private:
  const SpectralPoint* find(double wavelength_nm, double power_mw) const;
  std::vector<SpectralPoint> points_;
};

/// <n>(P) = amplitude * P^exponent.
struct PowerLaw {
  double amplitude = 0.0;
  double exponent = 0.0;

  double operator()(double power_mw) const;
};

/// Power law through two (power, mean) points.
PowerLaw power_law_through(double power_a, double mean_a, double power_b, double mean_b);

/// Table over kWavelengthSettingsNm x kPumpPowersMw. Power laws are pinned at
/// 787 nm (0.0037 at 39 mW, 0.00054 at 14 mW) and 819 nm (0.0012 at 39 mW,
/// 0.00036 at 14 mW); other wavelengths interpolate amplitude and exponent
/// linearly in wavelength (extrapolating at 783 nm).
SpectralModel default_spectral_model();

}  // namespace spdc
