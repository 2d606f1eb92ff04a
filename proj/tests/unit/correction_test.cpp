#include "spdcstat/correction.hpp"

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "spdcstat/errors.hpp"

namespace spdc {
namespace {

const CorrectionFactors kUniform = correction_factors(NetworkConfig{});

ProbabilityVector vector_of(double p1, double p2, double p3, double p4) {
  ProbabilityVector v;
  v.p = {1.0 - p1 - p2 - p3 - p4, p1, p2, p3, p4};
  v.opportunities = 1;
  return v;
}

MultiplicityHistogram hist_of(std::array<std::uint64_t, 5> counts, std::uint64_t opportunities) {
  MultiplicityHistogram h;
  h.window_ticks = 1;
  h.counts = counts;
  h.opportunities = opportunities;
  h.derive_zero_bin();
  return h;
}

TEST(ScaleAndNormalize, SingleBin) {
  const auto v = scale_and_normalize(hist_of({0, 120, 0, 0, 0}, 10000), {0.12, 0.02});
  EXPECT_NEAR(v.p[1], 0.1, 1e-15);
  EXPECT_NEAR(v.p[0], 0.9, 1e-15);
}

TEST(ScaleAndNormalize, NoEvents) {
  const auto v = scale_and_normalize(hist_of({0, 0, 0, 0, 0}, 500), {});
  EXPECT_EQ(v.p, (std::array<double, 5>{1, 0, 0, 0, 0}));
  EXPECT_TRUE(v.covariance.isZero());
}

TEST(ScaleAndNormalize, Errors) {
  MultiplicityHistogram too_many;
  too_many.counts = {0, 2000, 0, 0, 0};
  too_many.opportunities = 1000;
  EXPECT_THROW(scale_and_normalize(too_many, {0.12, 0.02}), UnphysicalScalingError);
  // Within the raw opportunities but not after dividing by eta.
  EXPECT_THROW(scale_and_normalize(hist_of({0, 200, 0, 0, 0}, 1000), {0.12, 0.02}),
               UnphysicalScalingError);
  MultiplicityHistogram empty;
  EXPECT_THROW(scale_and_normalize(empty, {}), EmptyOpportunitiesError);
  EXPECT_THROW(scale_and_normalize(hist_of({0, 1, 0, 0, 0}, 10), {0.0, 0.0}), DomainError);
  EXPECT_THROW(scale_and_normalize(hist_of({0, 1, 0, 0, 0}, 10), {0.5, -0.1}), DomainError);
}

TEST(ScaleAndNormalize, CovarianceByHand) {
  const double eta = 0.2, deta = 0.03, n = 1e5;
  const auto v = scale_and_normalize(hist_of({0, 400, 30, 0, 0}, 100000), {eta, deta});
  const double p1 = 400 / (eta * n), p2 = 30 / (eta * n);
  const double var1 = 400 / (eta * eta * n * n) + p1 * p1 * deta * deta / (eta * eta);
  const double cov12 = p1 * p2 * deta * deta / (eta * eta);
  EXPECT_NEAR(v.covariance(1, 1), var1, 1e-18);
  EXPECT_NEAR(v.covariance(1, 2), cov12, 1e-18);
  // P(0) is minus the sum of the others, so each row sums to zero.
  for (int r = 0; r < 5; ++r) EXPECT_NEAR(v.covariance.row(r).sum(), 0.0, 1e-18);
  EXPECT_TRUE(v.covariance.isApprox(v.covariance.transpose()));
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Covariance5>(v.covariance).eigenvalues().minCoeff(),
            -1e-15);
}

TEST(ApplyTrueProbabilities, WorkedExample) {
  const auto t = apply_true_probabilities(vector_of(0.1, 0.02, 0.004, 0.001), kUniform);
  EXPECT_NEAR(t.p[1], 0.094734375, 1e-12);
  EXPECT_NEAR(t.p[2], 0.017421875, 1e-12);
  EXPECT_NEAR(t.p[3], 0.004 - 0.5625 * 0.001, 1e-12);
  EXPECT_NEAR(t.p[4], 0.001, 1e-15);
  EXPECT_NEAR(t.p[0] + t.p[1] + t.p[2] + t.p[3] + t.p[4], 1.0, 1e-12);
  EXPECT_FALSE(t.any_clamped());
}

TEST(ApplyTrueProbabilities, IdentityWithoutMultiples) {
  const auto m = vector_of(0.07, 0, 0, 0);
  const auto t = apply_true_probabilities(m, kUniform);
  for (int n = 0; n < 5; ++n) EXPECT_EQ(t.p[n], m.p[n]);
}

TEST(ApplyTrueProbabilities, Linear) {
  const auto x = vector_of(0.1, 0.02, 0.004, 0.001);
  const auto y = vector_of(0.05, 0.01, 0.003, 0.0002);
  const double a = 0.3, b = 0.6;
  ProbabilityVector z;
  for (int n = 1; n < 5; ++n) z.p[n] = a * x.p[n] + b * y.p[n];
  const auto fx = apply_true_probabilities(x, kUniform);
  const auto fy = apply_true_probabilities(y, kUniform);
  const auto fz = apply_true_probabilities(z, kUniform);
  for (int n = 1; n < 5; ++n) EXPECT_NEAR(fz.p[n], a * fx.p[n] + b * fy.p[n], 1e-15);
}

TEST(ApplyTrueProbabilities, MonotoneForNonNegativeInputs) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.01);
  for (int trial = 0; trial < 200; ++trial) {
    const double p4 = u(rng) * 0.01, p3 = p4 + u(rng) * 0.1, p2 = p3 + u(rng), p1 = p2 + 5 * u(rng);
    const auto m = vector_of(p1, p2, p3, p4);
    const auto t = apply_true_probabilities(m, kUniform);
    for (int n = 1; n <= 3; ++n) EXPECT_LE(t.p[n], m.p[n]);
  }
}

TEST(ApplyTrueProbabilities, RoundTripWithForwardMixing) {
  for (const auto& cfg : {NetworkConfig{}, NetworkConfig({0.4, 0.3, 0.2, 0.1})}) {
    const auto f = correction_factors(cfg);
    const auto truth = vector_of(0.0037, 7e-6, 3e-8, 1e-10);
    const auto measured = forward_mixing(truth, f);
    const auto back = apply_true_probabilities(measured, f);
    for (int n = 0; n < 5; ++n) EXPECT_NEAR(back.p[n], truth.p[n], 1e-10);
  }
}

TEST(ApplyTrueProbabilities, ClampsSmallNegatives) {
  // P(3) slightly below C4 * P(4) within its uncertainty.
  auto m = vector_of(0.1, 0.02, 0.0005, 0.001);
  m.covariance(3, 3) = 1e-8;
  m.covariance(4, 4) = 1e-8;
  const auto t = apply_true_probabilities(m, kUniform);
  EXPECT_EQ(t.p[3], 0.0);
  EXPECT_TRUE(t.clamped[3]);
  EXPECT_FALSE(t.clamped[1]);
  EXPECT_NEAR(t.p[0] + t.p[1] + t.p[2] + t.p[3] + t.p[4], 1.0, 1e-12);
}

TEST(ApplyTrueProbabilities, RejectsLargeNegatives) {
  auto m = vector_of(0.1, 0.02, 0.0005, 0.001);
  m.covariance(3, 3) = 1e-12;
  EXPECT_THROW(apply_true_probabilities(m, kUniform), InconsistentInputError);
  // Exact input with no covariance: any real negative is inconsistent.
  EXPECT_THROW(apply_true_probabilities(vector_of(0.001, 0.02, 0, 0), kUniform),
               InconsistentInputError);
}

TEST(PropagateCovariance, Identity) {
  Eigen::MatrixXd c(3, 3);
  c << 2, 0.5, 0.1, 0.5, 1, 0.2, 0.1, 0.2, 3;
  EXPECT_TRUE(propagate_covariance(c, Eigen::MatrixXd::Identity(3, 3)).isApprox(c));
}

TEST(PropagateCovariance, DiagonalThroughCorrectionMap) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(5, 5);
  const double s[5] = {0, 4e-6, 3e-7, 2e-8, 1e-9};
  for (int n = 0; n < 5; ++n) c(n, n) = s[n];
  const auto out = propagate_covariance(c, true_probability_map(kUniform));
  const double expected = s[1] + 0.25 * 0.25 * s[2] + 0.0625 * 0.0625 * s[3] +
                          0.015625 * 0.015625 * s[4];
  EXPECT_NEAR(out(1, 1), expected, 1e-20);
  EXPECT_TRUE(out.isApprox(out.transpose()));
}

TEST(PropagateCovariance, ZeroStaysZero) {
  EXPECT_TRUE(propagate_covariance(Eigen::MatrixXd::Zero(5, 5), true_probability_map(kUniform))
                  .isZero());
}

TEST(PropagateCovariance, DimensionMismatch) {
  EXPECT_THROW(propagate_covariance(Eigen::MatrixXd::Zero(5, 5), Eigen::MatrixXd::Zero(5, 4)),
               DimensionError);
  EXPECT_THROW(propagate_covariance(Eigen::MatrixXd::Zero(5, 4), Eigen::MatrixXd::Zero(5, 5)),
               DimensionError);
}

TEST(LossInversion, LossMatrixColumnsSumToOne) {
  const auto l = loss_matrix(0.3);
  for (int n = 0; n < 5; ++n) EXPECT_NEAR(l.col(n).sum(), 1.0, 1e-15);
  EXPECT_NEAR(l(1, 2), 2 * 0.3 * 0.7, 1e-15);
  EXPECT_TRUE(loss_matrix(1.0).isIdentity());
}

TEST(LossInversion, RecoversTruncatedDistribution) {
  const double eta = 0.25;
  Eigen::Matrix<double, 5, 1> truth;
  truth << 0.8, 0.15, 0.04, 0.008, 0.002;
  const Eigen::Matrix<double, 5, 1> detected = loss_matrix(eta) * truth;
  ProbabilityVector d;
  for (int n = 0; n < 5; ++n) d.p[n] = detected(n);
  const auto back = invert_losses(d, {eta, 0.0});
  for (int n = 0; n < 5; ++n) EXPECT_NEAR(back.p[n], truth(n), 1e-12);
}

TEST(LossInversion, EtaUncertaintyEntersCovariance) {
  ProbabilityVector d = vector_of(0.01, 1e-4, 0, 0);
  const auto exact = invert_losses(d, {0.5, 0.0});
  const auto uncertain = invert_losses(d, {0.5, 0.05});
  EXPECT_EQ(exact.sigma(1), 0.0);
  EXPECT_GT(uncertain.sigma(1), 0.0);
  // dP1/deta for P1 ~ d1/eta - 2 d2 (1-eta)/eta^2 ... checked by finite differences.
  const double h = 1e-6;
  const double slope =
      (invert_losses(d, {0.5 + h, 0}).p[1] - invert_losses(d, {0.5 - h, 0}).p[1]) / (2 * h);
  EXPECT_NEAR(uncertain.sigma(1), std::abs(slope) * 0.05, 1e-9);
}

TEST(Correct, PerEventPipeline) {
  const auto h = hist_of({0, 1200, 24, 0, 0}, 100000);
  const auto r = correct(h, {0.12, 0.02}, kUniform);
  EXPECT_NEAR(r.measured.p[1], 0.1, 1e-15);
  EXPECT_NEAR(r.corrected.p[1], 0.1 - 0.25 * 0.002, 1e-15);
  EXPECT_NEAR(r.corrected.p[2], 0.002, 1e-15);
}

TEST(Correct, LossInversionPipeline) {
  const auto h = hist_of({0, 1000, 10, 0, 0}, 100000);
  const auto r = correct(h, {0.5, 0.0}, kUniform, ScalingMode::LossInversion);
  EXPECT_NEAR(r.measured.p[1], 0.01, 1e-15);
  // Splitter correction, then binomial loss inversion.
  const double d1 = 0.01 - 0.25 * 1e-4, d2 = 1e-4;
  EXPECT_NEAR(r.corrected.p[2], d2 / 0.25, 1e-12);
  EXPECT_NEAR(r.corrected.p[1], (d1 - 2 * 0.5 * 0.5 * d2 / 0.25) / 0.5, 1e-12);
}

TEST(Correct, CsvLayout) {
  const auto r = correct(hist_of({0, 120, 0, 0, 0}, 10000), {0.12, 0.0}, kUniform);
  std::ostringstream out;
  write_probability_csv(out, r);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n,p_measured,p_true,sigma_true");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 10), "0,0.9,0.9,");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
}

}  // namespace
}  // namespace spdc
