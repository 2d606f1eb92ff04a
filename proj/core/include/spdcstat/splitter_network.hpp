#pragma once

#include <array>
#include <map>

namespace spdc {

inline constexpr int kDetectorCount = 4;

/// Probability that a photon entering the splitter tree exits at each detector.
class NetworkConfig {
 public:
  /// Three cascaded balanced splitters: 1/4 per detector.
  NetworkConfig();
  /// Throws DomainError unless each entry is in [0, 1] and they sum to 1 within 1e-12.
  explicit NetworkConfig(const std::array<double, kDetectorCount>& detector_probabilities);

  static NetworkConfig uniform() { return NetworkConfig(); }

  const std::array<double, kDetectorCount>& probabilities() const noexcept { return probs_; }

 private:
  std::array<double, kDetectorCount> probs_;
};

/// Weights with which higher photon numbers leak into lower event multiplicities.
/// A_k: k photons fire one detector, B_k: two detectors, C_4: three detectors.
struct CorrectionFactors {
  double a2 = 0.0;
  double a3 = 0.0;
  double a4 = 0.0;
  double b3 = 0.0;
  double b4 = 0.0;
  double c4 = 0.0;
};

/// Probability that `photons` independently routed photons occupy exactly
/// `detectors` distinct detectors. Inclusion-exclusion over detector subsets.
/// Requires photons >= 1 and 1 <= detectors <= min(photons, 4).
double distinct_detector_prob(const NetworkConfig& cfg, int photons, int detectors);

/// Brute-force reference: sums over all 4^n photon-to-detector assignments.
/// Throws ResourceBoundError for n > 10.
std::map<int, double> enumerate_assignments_oracle(const NetworkConfig& cfg, int photons);

CorrectionFactors correction_factors(const NetworkConfig& cfg);

}  // namespace spdc
