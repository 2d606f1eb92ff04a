#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spdcstat/correction.hpp"
#include "spdcstat/distributions.hpp"

namespace spdc {

/// Photon numbers 0..8 enter every fit.
inline constexpr int kFitBins = 9;

/// Observed probabilities over the fit range. The 4+ bin sits at n = 4 and
/// n = 5..8 are zero, since non-resolving detectors cannot populate them.
struct FitInput {
  std::array<double, kFitBins> observed{};
  Eigen::Matrix<double, kFitBins, kFitBins> covariance =
      Eigen::Matrix<double, kFitBins, kFitBins>::Zero();
};

FitInput extend_to_fit_range(const ProbabilityVector& probabilities);

enum class FitWeighting {
  Unweighted,
  /// Weights 1/sigma^2 from the covariance diagonal. Bins without variance
  /// get the smallest positive variance present.
  InverseVariance,
};

struct FitOptions {
  FitWeighting weighting = FitWeighting::Unweighted;
  int max_iterations = 500;
  double parameter_tolerance = 1e-10;
};

struct FitResult {
  ModelKind kind = ModelKind::Poisson;
  /// Reported parameters: (mean), (mean), (r, p), (poisson_mean, thermal_mean).
  std::vector<double> parameters;
  Eigen::MatrixXd parameter_covariance;
  double mean_photon_number = 0.0;
  double mean_uncertainty = 0.0;
  double r_squared = 0.0;
  double residual_sum_of_squares = 0.0;
  /// observed - predicted over n = 0..8.
  std::vector<double> residuals;
  std::vector<double> predicted;
  /// All observed mass at n = 0; the model is the vacuum.
  bool degenerate = false;
  int iterations = 0;

  /// Fitted model. Throws DomainError for degenerate negative binomial fits,
  /// which have no (r, p) inside the parameter domain.
  PhotonNumberModel model() const;
};

/// Least-squares fit of one model family. Throws FitFailure when the
/// optimizer does not converge within the iteration budget.
FitResult fit(const FitInput& input, ModelKind kind, const FitOptions& options = {});
FitResult fit(const ProbabilityVector& probabilities, ModelKind kind,
              const FitOptions& options = {});

/// 1 - SS_res / SS_tot about the observed mean. Throws DimensionError for
/// mismatched or too-short inputs and UndefinedRSquaredError when the
/// observations have no spread.
double r_squared(std::span<const double> observed, std::span<const double> predicted);

struct ModelFailure {
  ModelKind kind;
  std::string message;
};

struct ModelComparison {
  /// Best first: higher R^2, then fewer parameters, then family order.
  std::vector<FitResult> ranked;
  std::vector<ModelFailure> failures;
};

/// Model families compared by default: Poisson, negative binomial, convolution.
inline constexpr std::array<ModelKind, 3> kComparedModels{
    ModelKind::Poisson, ModelKind::NegativeBinomial, ModelKind::PoissonThermalConvolution};

ModelComparison compare_models(const FitInput& input, const FitOptions& options = {});
ModelComparison compare_models(const ProbabilityVector& probabilities,
                               const FitOptions& options = {});

/// R^2 values closer than this (relative to SS_tot) rank as ties.
inline constexpr double kRSquaredTieTolerance = 1e-12;

/// CSV with header `model,param1,param2,mean_n,sigma_mean,r_squared`.
void write_fit_csv(std::ostream& out, const ModelComparison& comparison);

/// Observed vs predicted PMF per model: `n,observed,poisson,negative_binomial,convolution`.
void write_pmf_csv(std::ostream& out, const FitInput& input, const ModelComparison& comparison);

}  // namespace spdc
