#include "spdcstat/correction.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "spdcstat/errors.hpp"

namespace spdc {

namespace {

// Absolute slack for rounding noise on exact (zero covariance) inputs.
constexpr double kRoundingSlack = 1e-12;
constexpr double kClampSigmas = 5.0;

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// Clamp small negatives, reject large ones, then refresh P(0) from the rest.
void clamp_negatives(ProbabilityVector& v, int first_bin) {
  for (int n = first_bin; n < kProbabilityBins; ++n) {
    if (v.p[n] >= 0.0) continue;
    const double limit = kClampSigmas * v.sigma(n) + kRoundingSlack;
    if (v.p[n] < -limit) {
      throw InconsistentInputError("corrected P(" + std::to_string(n) + ") = " +
                                   std::to_string(v.p[n]) + " lies beyond 5 sigma (" +
                                   std::to_string(v.sigma(n)) + ") below zero");
    }
    v.p[n] = 0.0;
    v.clamped[n] = true;
  }
}

void refresh_zero_bin(ProbabilityVector& v) {
  double rest = 0.0;
  for (int n = 1; n < kProbabilityBins; ++n) rest += v.p[n];
  v.p[0] = 1.0 - rest;
}

}  // namespace

void EfficiencyModel::validate() const {
  if (!(eta_setup > 0.0 && eta_setup <= 1.0)) {
    throw DomainError("eta_setup must lie in (0, 1], got " + std::to_string(eta_setup));
  }
  if (!(eta_uncertainty >= 0.0) || !std::isfinite(eta_uncertainty)) {
    throw DomainError("eta uncertainty must be >= 0");
  }
}

double ProbabilityVector::sigma(int n) const {
  return std::sqrt(std::max(0.0, covariance(n, n)));
}

bool ProbabilityVector::any_clamped() const noexcept {
  for (bool c : clamped) {
    if (c) return true;
  }
  return false;
}

Eigen::MatrixXd propagate_covariance(const Eigen::MatrixXd& input_covariance,
                                     const Eigen::MatrixXd& linear_map) {
  if (input_covariance.rows() != input_covariance.cols()) {
    throw DimensionError("covariance must be square");
  }
  if (linear_map.cols() != input_covariance.rows()) {
    throw DimensionError("linear map has " + std::to_string(linear_map.cols()) +
                         " columns, covariance is " + std::to_string(input_covariance.rows()) +
                         "x" + std::to_string(input_covariance.cols()));
  }
  Eigen::MatrixXd out = linear_map * input_covariance * linear_map.transpose();
  return 0.5 * (out + out.transpose());
}

ProbabilityVector scale_and_normalize(const MultiplicityHistogram& hist,
                                      const EfficiencyModel& eff) {
  eff.validate();
  if (hist.opportunities == 0) {
    throw EmptyOpportunitiesError("histogram has no detection opportunities");
  }
  const double total = static_cast<double>(hist.opportunities);
  const double eta = eff.eta_setup;

  ProbabilityVector v;
  v.opportunities = hist.opportunities;
  double scaled_events = 0.0;
  for (int n = 1; n < kProbabilityBins; ++n) {
    const double scaled = static_cast<double>(hist.counts[n]) / eta;
    scaled_events += scaled;
    v.p[n] = scaled / total;
  }
  if (scaled_events > total) {
    throw UnphysicalScalingError("scaled events " + std::to_string(scaled_events) +
                                 " exceed " + std::to_string(hist.opportunities) +
                                 " opportunities; eta_setup too small for this data");
  }
  refresh_zero_bin(v);

  // Inputs: counts[1..4] (Poisson) and eta.
  Eigen::MatrixXd input = Eigen::MatrixXd::Zero(5, 5);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(kProbabilityBins, 5);
  for (int n = 1; n < kProbabilityBins; ++n) {
    input(n - 1, n - 1) = static_cast<double>(hist.counts[n]);
    jac(n, n - 1) = 1.0 / (eta * total);
    jac(n, 4) = -v.p[n] / eta;
  }
  input(4, 4) = eff.eta_uncertainty * eff.eta_uncertainty;
  for (int c = 0; c < 5; ++c) {
    double sum = 0.0;
    for (int n = 1; n < kProbabilityBins; ++n) sum += jac(n, c);
    jac(0, c) = -sum;
  }
  v.covariance = propagate_covariance(input, jac);
  return v;
}

Covariance5 true_probability_map(const CorrectionFactors& f) {
  Covariance5 m = Covariance5::Zero();
  m(1, 1) = 1.0;
  m(1, 2) = -f.a2;
  m(1, 3) = -f.a3;
  m(1, 4) = -f.a4;
  m(2, 2) = 1.0;
  m(2, 3) = -f.b3;
  m(2, 4) = -f.b4;
  m(3, 3) = 1.0;
  m(3, 4) = -f.c4;
  m(4, 4) = 1.0;
  m.row(0) = -(m.row(1) + m.row(2) + m.row(3) + m.row(4));
  return m;
}

ProbabilityVector apply_true_probabilities(const ProbabilityVector& measured,
                                           const CorrectionFactors& factors) {
  const Covariance5 map = true_probability_map(factors);
  Eigen::Matrix<double, kProbabilityBins, 1> x;
  for (int n = 0; n < kProbabilityBins; ++n) x(n) = measured.p[n];
  const Eigen::Matrix<double, kProbabilityBins, 1> y = map * x;

  ProbabilityVector out;
  out.opportunities = measured.opportunities;
  for (int n = 1; n < kProbabilityBins; ++n) out.p[n] = y(n);
  out.covariance = propagate_covariance(measured.covariance, map);
  clamp_negatives(out, 1);
  refresh_zero_bin(out);
  return out;
}

ProbabilityVector forward_mixing(const ProbabilityVector& truth,
                                 const CorrectionFactors& factors) {
  const Covariance5 map = true_probability_map(factors);
  // Invert on the 1..4 block; P(0) follows from normalization.
  const Eigen::Matrix4d block = map.block<4, 4>(1, 1);
  const Eigen::Matrix4d inverse = block.triangularView<Eigen::Upper>().solve(
      Eigen::Matrix4d::Identity());

  Eigen::Vector4d t;
  for (int n = 1; n < kProbabilityBins; ++n) t(n - 1) = truth.p[n];
  const Eigen::Vector4d m = inverse * t;

  Covariance5 full = Covariance5::Zero();
  full.block<4, 4>(1, 1) = inverse;
  full.row(0) = -(full.row(1) + full.row(2) + full.row(3) + full.row(4));

  ProbabilityVector out;
  out.opportunities = truth.opportunities;
  for (int n = 1; n < kProbabilityBins; ++n) out.p[n] = m(n - 1);
  refresh_zero_bin(out);
  out.covariance = propagate_covariance(truth.covariance, full);
  return out;
}

Covariance5 loss_matrix(double eta) {
  Covariance5 l = Covariance5::Zero();
  for (int n = 0; n < kProbabilityBins; ++n) {
    for (int k = 0; k <= n; ++k) {
      l(k, n) = binomial(n, k) * std::pow(eta, k) * std::pow(1.0 - eta, n - k);
    }
  }
  return l;
}

ProbabilityVector invert_losses(const ProbabilityVector& detected, const EfficiencyModel& eff) {
  eff.validate();
  const double eta = eff.eta_setup;
  const Covariance5 inverse =
      loss_matrix(eta).triangularView<Eigen::Upper>().solve(Covariance5::Identity());

  Eigen::Matrix<double, kProbabilityBins, 1> d;
  for (int n = 0; n < kProbabilityBins; ++n) d(n) = detected.p[n];
  const Eigen::Matrix<double, kProbabilityBins, 1> p = inverse * d;

  // dL^-1/deta = -L^-1 (dL/deta) L^-1, with dL/deta by central difference.
  const double h = 1e-6 * std::min(eta, 1.0 - eta + 1e-3);
  const Covariance5 dl = (loss_matrix(eta + h) - loss_matrix(eta - h)) / (2.0 * h);
  const Eigen::Matrix<double, kProbabilityBins, 1> dp_deta = -inverse * dl * p;

  ProbabilityVector out;
  out.opportunities = detected.opportunities;
  for (int n = 0; n < kProbabilityBins; ++n) out.p[n] = p(n);
  Covariance5 cov = propagate_covariance(detected.covariance, inverse);
  cov += dp_deta * dp_deta.transpose() * (eff.eta_uncertainty * eff.eta_uncertainty);
  out.covariance = cov;
  clamp_negatives(out, 1);
  refresh_zero_bin(out);
  if (out.p[0] < -(kClampSigmas * out.sigma(0) + kRoundingSlack)) {
    throw UnphysicalScalingError("loss inversion leaves P(0) = " + std::to_string(out.p[0]));
  }
  return out;
}

CorrectedProbabilities correct(const MultiplicityHistogram& hist, const EfficiencyModel& eff,
                               const CorrectionFactors& factors, ScalingMode mode) {
  CorrectedProbabilities out;
  if (mode == ScalingMode::PerEvent) {
    out.measured = scale_and_normalize(hist, eff);
    out.corrected = apply_true_probabilities(out.measured, factors);
  } else {
    out.measured = scale_and_normalize(hist, EfficiencyModel{1.0, 0.0});
    out.corrected = invert_losses(apply_true_probabilities(out.measured, factors), eff);
  }
  return out;
}

void write_probability_csv(std::ostream& out, const CorrectedProbabilities& probs) {
  out << "n,p_measured,p_true,sigma_true\n";
  char line[160];
  for (int n = 0; n < kProbabilityBins; ++n) {
    std::snprintf(line, sizeof line, "%d,%.12g,%.12g,%.6g\n", n, probs.measured.p[n],
                  probs.corrected.p[n], probs.corrected.sigma(n));
    out << line;
  }
}

}  // namespace spdc
