#include "spdcstat/splitter_network.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "spdcstat/errors.hpp"

namespace spdc {

namespace {
constexpr unsigned kFullMask = (1u << kDetectorCount) - 1u;
constexpr int kOracleMaxPhotons = 10;
}  // namespace

NetworkConfig::NetworkConfig() { probs_.fill(1.0 / kDetectorCount); }

NetworkConfig::NetworkConfig(const std::array<double, kDetectorCount>& detector_probabilities)
    : probs_(detector_probabilities) {
  double sum = 0.0;
  for (double q : probs_) {
    if (!(q >= 0.0 && q <= 1.0)) {
      throw DomainError("detector probability out of [0, 1]: " + std::to_string(q));
    }
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw DomainError("detector probabilities must sum to 1, got " + std::to_string(sum));
  }
}

double distinct_detector_prob(const NetworkConfig& cfg, int photons, int detectors) {
  if (photons < 1) throw DomainError("photon number must be >= 1");
  if (detectors < 1 || detectors > photons || detectors > kDetectorCount) {
    throw DomainError("detector count " + std::to_string(detectors) + " impossible for " +
                      std::to_string(photons) + " photons");
  }
  const auto& q = cfg.probabilities();

  // P(occupied set == S) = sum_{T subset S} (-1)^{|S|-|T|} (sum_{i in T} q_i)^n.
  // Extended precision absorbs the cancellation between subset terms.
  long double total = 0.0L;
  for (unsigned s = 1; s <= kFullMask; ++s) {
    if (std::popcount(s) != detectors) continue;
    long double exact = 0.0L;
    for (unsigned t = s;; t = (t - 1) & s) {
      long double weight = 0.0L;
      for (int i = 0; i < kDetectorCount; ++i) {
        if (t & (1u << i)) weight += q[i];
      }
      const long double term = std::pow(weight, photons);
      exact += ((std::popcount(s) - std::popcount(t)) % 2 == 0) ? term : -term;
      if (t == 0) break;
    }
    total += exact;
  }
  return static_cast<double>(total);
}

std::map<int, double> enumerate_assignments_oracle(const NetworkConfig& cfg, int photons) {
  if (photons < 1) throw DomainError("photon number must be >= 1");
  if (photons > kOracleMaxPhotons) {
    throw ResourceBoundError("enumeration limited to n <= " + std::to_string(kOracleMaxPhotons));
  }
  const auto& q = cfg.probabilities();
  std::map<int, long double> sums;

  std::size_t assignments = 1;
  for (int i = 0; i < photons; ++i) assignments *= kDetectorCount;

  for (std::size_t code = 0; code < assignments; ++code) {
    std::size_t rest = code;
    unsigned occupied = 0;
    long double weight = 1.0L;
    for (int photon = 0; photon < photons; ++photon) {
      const auto detector = static_cast<int>(rest % kDetectorCount);
      rest /= kDetectorCount;
      occupied |= 1u << detector;
      weight *= q[detector];
    }
    sums[std::popcount(occupied)] += weight;
  }
  std::map<int, double> by_distinct;
  for (const auto& [d, p] : sums) by_distinct[d] = static_cast<double>(p);
  return by_distinct;
}

CorrectionFactors correction_factors(const NetworkConfig& cfg) {
  CorrectionFactors f;
  f.a2 = distinct_detector_prob(cfg, 2, 1);
  f.a3 = distinct_detector_prob(cfg, 3, 1);
  f.a4 = distinct_detector_prob(cfg, 4, 1);
  f.b3 = distinct_detector_prob(cfg, 3, 2);
  f.b4 = distinct_detector_prob(cfg, 4, 2);
  f.c4 = distinct_detector_prob(cfg, 4, 3);
  return f;
}

}  // namespace spdc
