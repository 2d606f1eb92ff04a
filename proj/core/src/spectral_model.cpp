#include "spdcstat/spectral_model.hpp"

#include <cmath>
#include <string>

#include "spdcstat/errors.hpp"

namespace spdc {

namespace {
constexpr double kSettingTolerance = 1e-6;

struct Anchor {
  double wavelength_nm;
  double low_power_mw, low_mean;
  double high_power_mw, high_mean;
};

constexpr Anchor kShortAnchor{787.0, 14.0, 0.00054, 39.0, 0.0037};
constexpr Anchor kLongAnchor{819.0, 14.0, 0.00036, 39.0, 0.0012};
}  // namespace

void SpectralModel::set(double wavelength_nm, double power_mw, double mean_photon_number) {
  if (!(mean_photon_number >= 0.0) || !std::isfinite(mean_photon_number)) {
    throw DomainError("spectral model mean must be >= 0");
  }
  for (auto& p : points_) {
    if (std::abs(p.wavelength_nm - wavelength_nm) < kSettingTolerance &&
        std::abs(p.power_mw - power_mw) < kSettingTolerance) {
      p.mean_photon_number = mean_photon_number;
      return;
    }
  }
  points_.push_back({wavelength_nm, power_mw, mean_photon_number});
}

const SpectralPoint* SpectralModel::find(double wavelength_nm, double power_mw) const {
  for (const auto& p : points_) {
    if (std::abs(p.wavelength_nm - wavelength_nm) < kSettingTolerance &&
        std::abs(p.power_mw - power_mw) < kSettingTolerance) {
      return &p;
    }
  }
  return nullptr;
}

bool SpectralModel::contains(double wavelength_nm, double power_mw) const {
  return find(wavelength_nm, power_mw) != nullptr;
}

double SpectralModel::mean_photon_number(double wavelength_nm, double power_mw) const {
  const auto* p = find(wavelength_nm, power_mw);
  if (p == nullptr) {
    throw DomainError("no spectral model entry for " + std::to_string(wavelength_nm) + " nm, " +
                      std::to_string(power_mw) + " mW");
  }
  return p->mean_photon_number;
}

double PowerLaw::operator()(double power_mw) const {
  return amplitude * std::pow(power_mw, exponent);
}

PowerLaw power_law_through(double power_a, double mean_a, double power_b, double mean_b) {
  if (!(power_a > 0.0 && power_b > 0.0 && mean_a > 0.0 && mean_b > 0.0) || power_a == power_b) {
    throw DomainError("power law needs two distinct positive powers and positive means");
  }
  PowerLaw law;
  law.exponent = std::log(mean_b / mean_a) / std::log(power_b / power_a);
  law.amplitude = mean_a / std::pow(power_a, law.exponent);
  return law;
}

SpectralModel default_spectral_model() {
  const PowerLaw short_law =
      power_law_through(kShortAnchor.low_power_mw, kShortAnchor.low_mean,
                        kShortAnchor.high_power_mw, kShortAnchor.high_mean);
  const PowerLaw long_law = power_law_through(kLongAnchor.low_power_mw, kLongAnchor.low_mean,
                                              kLongAnchor.high_power_mw, kLongAnchor.high_mean);
  SpectralModel model;
  for (double wl : kWavelengthSettingsNm) {
    const double t = (wl - kShortAnchor.wavelength_nm) /
                     (kLongAnchor.wavelength_nm - kShortAnchor.wavelength_nm);
    PowerLaw law;
    if (wl == kShortAnchor.wavelength_nm) {
      law = short_law;
    } else if (wl == kLongAnchor.wavelength_nm) {
      law = long_law;
    } else {
      law.amplitude = short_law.amplitude + t * (long_law.amplitude - short_law.amplitude);
      law.exponent = short_law.exponent + t * (long_law.exponent - short_law.exponent);
    }
    for (double power : kPumpPowersMw) model.set(wl, power, law(power));
  }
  return model;
}

}  // namespace spdc
