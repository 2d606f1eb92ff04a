#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>

#include <Eigen/Dense>

#include "spdcstat/coincidence.hpp"
#include "spdcstat/splitter_network.hpp"

namespace spdc {

inline constexpr int kProbabilityBins = kMaxMultiplicity + 1;

using Covariance5 = Eigen::Matrix<double, kProbabilityBins, kProbabilityBins>;

/// Overall single-photon detection efficiency of the apparatus.
struct EfficiencyModel {
  double eta_setup = 0.12;
  double eta_uncertainty = 0.02;

  /// Throws DomainError unless 0 < eta_setup <= 1 and eta_uncertainty >= 0.
  void validate() const;
};

/// Normalized probabilities for n = 0..4 with their covariance.
struct ProbabilityVector {
  std::array<double, kProbabilityBins> p{};
  Covariance5 covariance = Covariance5::Zero();
  std::uint64_t opportunities = 0;
  /// Entries that came out slightly negative (within 5 sigma) and were set to 0.
  std::array<bool, kProbabilityBins> clamped{};

  double sigma(int n) const;
  bool any_clamped() const noexcept;
};

enum class ScalingMode {
  /// Divide event counts by eta_setup, then correct for the splitter network.
  PerEvent,
  /// Correct raw event probabilities for the splitter network, then invert
  /// the binomial photon-loss matrix.
  LossInversion,
};

/// S[n] = counts[n] / eta for n >= 1, p[n] = S[n] / opportunities and
/// p[0] = 1 - sum p[n]. Counts are Poisson; the eta uncertainty enters as a
/// fully correlated multiplicative term.
/// Throws EmptyOpportunitiesError for 0 opportunities and
/// UnphysicalScalingError when the scaled events exceed the opportunities.
ProbabilityVector scale_and_normalize(const MultiplicityHistogram& hist,
                                      const EfficiencyModel& eff);

/// Splitter-network correction: subtracts the leakage of higher photon
/// numbers into lower multiplicities and sets P(0) = 1 - sum P(1..4).
///
/// Negative results within 5 propagated sigma are clamped to 0 and flagged;
/// anything lower throws InconsistentInputError.
ProbabilityVector apply_true_probabilities(const ProbabilityVector& measured,
                                           const CorrectionFactors& factors);

/// The correction above as a matrix acting on (p0..p4). Row 0 holds the
/// linear part of P(0) = 1 - sum; the constant does not affect covariance.
Covariance5 true_probability_map(const CorrectionFactors& factors);

/// Exact inverse of apply_true_probabilities on the n = 1..4 block: the
/// measured vector the correction maps back onto `truth`.
ProbabilityVector forward_mixing(const ProbabilityVector& truth,
                                 const CorrectionFactors& factors);

/// Binomial loss matrix L[k][n] = C(n,k) eta^k (1-eta)^(n-k), truncated at n = 4.
Covariance5 loss_matrix(double eta);

/// P = L(eta)^-1 d with covariance from both d and the eta uncertainty.
ProbabilityVector invert_losses(const ProbabilityVector& detected, const EfficiencyModel& eff);

/// J C J^T, symmetrized. Throws DimensionError if the shapes do not conform.
Eigen::MatrixXd propagate_covariance(const Eigen::MatrixXd& input_covariance,
                                     const Eigen::MatrixXd& linear_map);

struct CorrectedProbabilities {
  ProbabilityVector measured;
  ProbabilityVector corrected;
};

/// Full correction chain for one histogram.
CorrectedProbabilities correct(const MultiplicityHistogram& hist, const EfficiencyModel& eff,
                               const CorrectionFactors& factors,
                               ScalingMode mode = ScalingMode::PerEvent);

/// CSV with header `n,p_measured,p_true,sigma_true`.
void write_probability_csv(std::ostream& out, const CorrectedProbabilities& probs);

}  // namespace spdc
