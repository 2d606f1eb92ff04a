#include "spdcstat/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "spdcstat/errors.hpp"

namespace spdc {

namespace {

// Box for the natural fit coordinates; the optimizer works on their logs.
constexpr double kMinMean = 1e-12;
constexpr double kMaxMean = 50.0;
constexpr double kMinShape = 1e-3;
constexpr double kMaxShape = 1e6;
constexpr double kFdStep = 1e-6;
constexpr double kBoundSlack = 1e-9;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Pmf = std::array<double, kFitBins>;

// Natural coordinates per family:
//   Poisson, Thermal: (mean)
//   NegativeBinomial: (mean, r)
//   Convolution:      (poisson_mean, thermal_mean)
struct Family {
  ModelKind kind;
  int dims;
  Vec lo;  // log space
  Vec hi;
};

Family family_for(ModelKind kind) {
  Family f{kind, parameter_count(kind), Vec(parameter_count(kind)), Vec(parameter_count(kind))};
  f.lo.setConstant(std::log(kMinMean));
  f.hi.setConstant(std::log(kMaxMean));
  if (kind == ModelKind::NegativeBinomial) {
    f.lo(1) = std::log(kMinShape);
    f.hi(1) = std::log(kMaxShape);
  }
  return f;
}

// Negative binomial in (mean, r) form. Avoids forming 1 - p, which loses
// all precision as r grows toward the Poisson limit.
double negbin_log_pmf_mean_shape(double m, double r, int n) {
  double log_rising = 0.0;
  for (int j = 0; j < n; ++j) log_rising += std::log(r + j);
  return log_rising - std::lgamma(n + 1.0) - r * std::log1p(m / r) +
         n * (std::log(m) - std::log(r + m));
}

Pmf predict(ModelKind kind, const Vec& phi) {
  Pmf out{};
  switch (kind) {
    case ModelKind::NegativeBinomial:
      for (int n = 0; n < kFitBins; ++n)
        out[n] = std::exp(negbin_log_pmf_mean_shape(phi(0), phi(1), n));
      break;
    case ModelKind::Poisson: {
      const auto m = PhotonNumberModel::poisson(phi(0));
      for (int n = 0; n < kFitBins; ++n) out[n] = pmf(m, n);
      break;
    }
    case ModelKind::Thermal: {
      const auto m = PhotonNumberModel::thermal(phi(0));
      for (int n = 0; n < kFitBins; ++n) out[n] = pmf(m, n);
      break;
    }
    case ModelKind::PoissonThermalConvolution: {
      const auto m = PhotonNumberModel::convolution(phi(0), phi(1));
      for (int n = 0; n < kFitBins; ++n) out[n] = pmf(m, n);
      break;
    }
  }
  return out;
}

class Problem {
 public:
  Problem(ModelKind kind, const FitInput& input, const FitOptions& options)
      : family_(family_for(kind)), observed_(input.observed) {
    sqrt_weights_.fill(1.0);
    if (options.weighting == FitWeighting::InverseVariance) {
      double floor = std::numeric_limits<double>::infinity();
      for (int n = 0; n < kFitBins; ++n) {
        const double v = input.covariance(n, n);
        if (v > 0.0) floor = std::min(floor, v);
      }
      if (!std::isfinite(floor)) floor = 1.0;
      for (int n = 0; n < kFitBins; ++n) {
        sqrt_weights_[n] = 1.0 / std::sqrt(std::max(input.covariance(n, n), floor));
      }
    }
  }

  const Family& family() const { return family_; }
  double weight(int n) const { return sqrt_weights_[n] * sqrt_weights_[n]; }

  Vec clamp(Vec theta) const {
    return theta.cwiseMax(family_.lo).cwiseMin(family_.hi);
  }

  // Weighted residuals observed - predicted.
  Vec residuals(const Vec& theta) const {
    const Pmf p = predict(family_.kind, theta.array().exp().matrix());
    Vec r(kFitBins);
    for (int n = 0; n < kFitBins; ++n) r(n) = sqrt_weights_[n] * (observed_[n] - p[n]);
    return r;
  }

  double cost(const Vec& theta) const { return residuals(theta).squaredNorm(); }

  // d(predicted)/d(theta), unweighted, central differences.
  Mat prediction_jacobian(const Vec& theta) const {
    Mat j(kFitBins, family_.dims);
    for (int i = 0; i < family_.dims; ++i) {
      Vec up = theta;
      Vec down = theta;
      up(i) += kFdStep;
      down(i) -= kFdStep;
      const Pmf pu = predict(family_.kind, up.array().exp().matrix());
      const Pmf pd = predict(family_.kind, down.array().exp().matrix());
      for (int n = 0; n < kFitBins; ++n) j(n, i) = (pu[n] - pd[n]) / (2.0 * kFdStep);
    }
    return j;
  }

  // d(residuals)/d(theta).
  Mat residual_jacobian(const Vec& theta) const {
    Mat j = -prediction_jacobian(theta);
    for (int n = 0; n < kFitBins; ++n) j.row(n) *= sqrt_weights_[n];
    return j;
  }

  bool at_lower(const Vec& theta, int i) const { return theta(i) <= family_.lo(i) + kBoundSlack; }
  bool at_upper(const Vec& theta, int i) const { return theta(i) >= family_.hi(i) - kBoundSlack; }

 private:
  Family family_;
  Pmf observed_;
  std::array<double, kFitBins> sqrt_weights_{};
};

struct LmOutcome {
  Vec theta;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt with box constraints: coordinates pinned at a bound
// with the gradient pointing outward drop out of the step.
LmOutcome levenberg_marquardt(const Problem& problem, const Vec& start, int max_iterations,
                              double tolerance) {
  LmOutcome out;
  out.theta = problem.clamp(start);
  Vec r = problem.residuals(out.theta);
  out.cost = r.squaredNorm();
  double lambda = 1e-3;
  const int dims = problem.family().dims;

  for (out.iterations = 0; out.iterations < max_iterations; ++out.iterations) {
    if (out.cost == 0.0) {
      out.converged = true;
      return out;
    }
    const Mat j = problem.residual_jacobian(out.theta);
    const Vec g = j.transpose() * r;

    std::vector<int> free;
    for (int i = 0; i < dims; ++i) {
      const bool pinned = (problem.at_lower(out.theta, i) && g(i) > 0.0) ||
                          (problem.at_upper(out.theta, i) && g(i) < 0.0);
      if (!pinned) free.push_back(i);
    }
    if (free.empty()) {
      out.converged = true;
      return out;
    }

    const auto k = static_cast<int>(free.size());
    Mat jf(kFitBins, k);
    Vec gf(k);
    for (int c = 0; c < k; ++c) {
      jf.col(c) = j.col(free[c]);
      gf(c) = g(free[c]);
    }
    const Mat h = jf.transpose() * jf;
    const double scale_floor = 1e-30 * std::max(1e-300, h.diagonal().maxCoeff());

    bool accepted = false;
    while (!accepted) {
      Mat damped = h;
      for (int c = 0; c < k; ++c) damped(c, c) += lambda * std::max(h(c, c), scale_floor);
      const Vec step = damped.ldlt().solve(-gf);
      Vec trial = out.theta;
      for (int c = 0; c < k; ++c) trial(free[c]) += step(c);
      trial = problem.clamp(trial);
      const Vec r_trial = problem.residuals(trial);
      const double c_trial = r_trial.squaredNorm();
      if (std::isfinite(c_trial) && c_trial < out.cost) {
        const double moved = (trial - out.theta).cwiseAbs().maxCoeff();
        out.theta = trial;
        r = r_trial;
        out.cost = c_trial;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (moved < tolerance) {
          out.converged = true;
          ++out.iterations;
          return out;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No representable improvement left: numerical minimum.
          out.converged = true;
          return out;
        }
      }
    }
  }
  return out;
}

Vec moment_start(ModelKind kind, const FitInput& input) {
  double mu = 0.0;
  double second = 0.0;
  for (int n = 0; n < kFitBins; ++n) {
    mu += n * input.observed[n];
    second += double(n) * n * input.observed[n];
  }
  mu = std::clamp(mu, kMinMean, kMaxMean);
  const double var = second - mu * mu;
  Vec phi(parameter_count(kind));
  switch (kind) {
    case ModelKind::Poisson:
    case ModelKind::Thermal:
      phi(0) = mu;
      break;
    case ModelKind::NegativeBinomial:
      phi(0) = mu;
      phi(1) = var > mu * (1.0 + 1e-9) ? mu * mu / (var - mu) : kMaxShape;
      break;
    case ModelKind::PoissonThermalConvolution: {
      const double excess = var - mu;
      double thermal = excess > 0.0 ? std::sqrt(excess) : 1e-3 * mu;
      thermal = std::min(thermal, mu);
      phi(0) = std::max(mu - thermal, 1e-3 * mu);
      phi(1) = thermal;
      break;
    }
  }
  return phi.array().max(1e-300).log().matrix();
}

// Best point of a multiplicative neighborhood (or a full log grid) around `centre`.
Vec best_of_grid(const Problem& problem, const Vec& centre, bool full_range) {
  const auto& fam = problem.family();
  std::vector<std::vector<double>> axes(fam.dims);
  for (int i = 0; i < fam.dims; ++i) {
    if (full_range) {
      constexpr int kPoints = 40;
      for (int s = 0; s < kPoints; ++s)
        axes[i].push_back(fam.lo(i) + (fam.hi(i) - fam.lo(i)) * s / (kPoints - 1));
    } else {
      for (double f : {-2.3, -1.2, 0.0, 1.2, 2.3}) axes[i].push_back(centre(i) + f);
    }
  }
  Vec best = problem.clamp(centre);
  double best_cost = problem.cost(best);
  Vec trial(fam.dims);
  const std::size_t n0 = axes[0].size();
  const std::size_t n1 = fam.dims > 1 ? axes[1].size() : 1;
  for (std::size_t a = 0; a < n0; ++a) {
    for (std::size_t b = 0; b < n1; ++b) {
      trial(0) = axes[0][a];
      if (fam.dims > 1) trial(1) = axes[1][b];
      const Vec t = problem.clamp(trial);
      const double c = problem.cost(t);
      if (std::isfinite(c) && c < best_cost) {
        best_cost = c;
        best = t;
      }
    }
  }
  return best;
}

std::vector<double> reported_parameters(ModelKind kind, const Vec& phi) {
  if (kind == ModelKind::NegativeBinomial) {
    const double m = phi(0);
    const double r = phi(1);
    return {r, std::min(r / (r + m), std::nextafter(1.0, 0.0))};
  }
  return std::vector<double>(phi.data(), phi.data() + phi.size());
}

FitResult degenerate_result(ModelKind kind, const FitInput& input) {
  FitResult res;
  res.kind = kind;
  res.degenerate = true;
  switch (kind) {
    case ModelKind::Poisson:
    case ModelKind::Thermal:
      res.parameters = {0.0};
      break;
    case ModelKind::NegativeBinomial:
      res.parameters = {1.0, 1.0};
      break;
    case ModelKind::PoissonThermalConvolution:
      res.parameters = {0.0, 0.0};
      break;
  }
  const int k = parameter_count(kind);
  res.parameter_covariance = Mat::Zero(k, k);
  res.predicted.assign(kFitBins, 0.0);
  res.predicted[0] = 1.0;
  res.residuals.resize(kFitBins);
  for (int n = 0; n < kFitBins; ++n) {
    res.residuals[n] = input.observed[n] - res.predicted[n];
    res.residual_sum_of_squares += res.residuals[n] * res.residuals[n];
  }
  res.r_squared = r_squared(input.observed, res.predicted);
  return res;
}

}  // namespace

FitInput extend_to_fit_range(const ProbabilityVector& probabilities) {
  FitInput in;
  for (int n = 0; n < kProbabilityBins; ++n) in.observed[n] = probabilities.p[n];
  in.covariance.topLeftCorner<kProbabilityBins, kProbabilityBins>() = probabilities.covariance;
  return in;
}

PhotonNumberModel FitResult::model() const {
  if (degenerate && kind == ModelKind::NegativeBinomial) {
    throw DomainError("degenerate negative binomial fit has no model inside (r, p) domain");
  }
  return make_model(kind, parameters);
}

double r_squared(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size()) {
    throw DimensionError("observed and predicted lengths differ");
  }
  if (observed.size() < 2) throw DimensionError("R^2 needs at least two points");
  double mean_obs = 0.0;
  for (double o : observed) mean_obs += o;
  mean_obs /= static_cast<double>(observed.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ss_tot += (observed[i] - mean_obs) * (observed[i] - mean_obs);
    ss_res += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
  }
  if (ss_tot == 0.0) throw UndefinedRSquaredError("observations have zero total variance");
  if (ss_res == 0.0) return 1.0;
  return 1.0 - ss_res / ss_tot;
}

FitResult fit(const FitInput& input, ModelKind kind, const FitOptions& options) {
  bool has_signal = false;
  for (int n = 1; n < kFitBins; ++n) has_signal = has_signal || input.observed[n] > 0.0;
  if (!has_signal) return degenerate_result(kind, input);

  const Problem problem(kind, input, options);
  const Vec start = best_of_grid(problem, moment_start(kind, input), false);
  LmOutcome lm =
      levenberg_marquardt(problem, start, options.max_iterations, options.parameter_tolerance);
  if (!lm.converged) {
    const Vec restart = best_of_grid(problem, start, true);
    LmOutcome second = levenberg_marquardt(problem, restart, 2 * options.max_iterations,
                                           options.parameter_tolerance);
    second.iterations += lm.iterations;
    lm = second;
  }
  if (!lm.converged) {
    std::ostringstream diag;
    diag << "model=" << to_string(kind) << " iterations=" << lm.iterations
         << " cost=" << lm.cost << " log-parameters=" << lm.theta.transpose();
    throw FitFailure("fit did not converge for " + std::string(to_string(kind)), diag.str());
  }

  const int dims = problem.family().dims;
  const Vec phi = lm.theta.array().exp().matrix();

  FitResult res;
  res.kind = kind;
  res.iterations = lm.iterations;
  res.parameters = reported_parameters(kind, phi);
  const Pmf predicted = predict(kind, phi);
  res.predicted.assign(predicted.begin(), predicted.end());
  res.residuals.resize(kFitBins);
  for (int n = 0; n < kFitBins; ++n) {
    res.residuals[n] = input.observed[n] - predicted[n];
    res.residual_sum_of_squares += res.residuals[n] * res.residuals[n];
  }
  res.r_squared = r_squared(input.observed, res.predicted);
  res.mean_photon_number = mean(res.model());

  // Parameter covariance in natural coordinates, sandwich form; parameters
  // pinned at a bound are held fixed.
  std::vector<int> free;
  for (int i = 0; i < dims; ++i) {
    if (!problem.at_lower(lm.theta, i) && !problem.at_upper(lm.theta, i)) free.push_back(i);
  }
  Mat cov_phi = Mat::Zero(dims, dims);
  if (!free.empty()) {
    const Mat jt = problem.prediction_jacobian(lm.theta);
    const auto k = static_cast<int>(free.size());
    Mat j(kFitBins, k);
    for (int c = 0; c < k; ++c) j.col(c) = jt.col(free[c]) / phi(free[c]);
    Vec w(kFitBins);
    for (int n = 0; n < kFitBins; ++n) w(n) = problem.weight(n);
    const Mat wj = w.asDiagonal() * j;
    const Mat a_inv = (j.transpose() * wj).completeOrthogonalDecomposition().pseudoInverse();
    Mat cov_free;
    if (!input.covariance.isZero(0.0)) {
      cov_free = a_inv * (wj.transpose() * input.covariance * wj) * a_inv;
    } else {
      double weighted_ss = 0.0;
      for (int n = 0; n < kFitBins; ++n) weighted_ss += w(n) * res.residuals[n] * res.residuals[n];
      cov_free = a_inv * (weighted_ss / (kFitBins - k));
    }
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) cov_phi(free[a], free[b]) = cov_free(a, b);
  }

  // Delta method: the mean is phi(0) for one-parameter families and for the
  // (mean, r) negative binomial, and phi(0) + phi(1) for the convolution.
  Vec grad = Vec::Zero(dims);
  grad(0) = 1.0;
  if (kind == ModelKind::PoissonThermalConvolution) grad(1) = 1.0;
  res.mean_uncertainty = std::sqrt(std::max(0.0, grad.dot(cov_phi * grad)));

  if (kind == ModelKind::NegativeBinomial) {
    const double m = phi(0);
    const double r = phi(1);
    Mat t(2, 2);
    t << 0.0, 1.0, -r / ((r + m) * (r + m)), m / ((r + m) * (r + m));
    res.parameter_covariance = t * cov_phi * t.transpose();
  } else {
    res.parameter_covariance = cov_phi;
  }
  return res;
}

FitResult fit(const ProbabilityVector& probabilities, ModelKind kind, const FitOptions& options) {
  return fit(extend_to_fit_range(probabilities), kind, options);
}

ModelComparison compare_models(const FitInput& input, const FitOptions& options) {
  ModelComparison out;
  for (ModelKind kind : kComparedModels) {
    try {
      out.ranked.push_back(fit(input, kind, options));
    } catch (const AnalysisError& e) {
      out.failures.push_back({kind, e.what()});
    } catch (const DomainError& e) {
      out.failures.push_back({kind, e.what()});
    }
  }
  if (out.ranked.empty()) return out;

  double mean_obs = 0.0;
  for (double o : input.observed) mean_obs += o;
  mean_obs /= kFitBins;
  double ss_tot = 0.0;
  for (double o : input.observed) ss_tot += (o - mean_obs) * (o - mean_obs);
  const double tie = kRSquaredTieTolerance * ss_tot;

  const auto family_rank = [](ModelKind k) {
    return static_cast<int>(std::find(kComparedModels.begin(), kComparedModels.end(), k) -
                            kComparedModels.begin());
  };
  // Residual sums share SS_tot, so they order R^2 without its cancellation.
  const auto better = [&](const FitResult& a, const FitResult& b) {
    const double diff = a.residual_sum_of_squares - b.residual_sum_of_squares;
    if (diff < -tie) return true;
    if (diff > tie) return false;
    if (parameter_count(a.kind) != parameter_count(b.kind))
      return parameter_count(a.kind) < parameter_count(b.kind);
    return family_rank(a.kind) < family_rank(b.kind);
  };
  // Insertion sort: the tie relation is not transitive, so std::sort is off limits.
  auto& v = out.ranked;
  for (std::size_t i = 1; i < v.size(); ++i) {
    for (std::size_t j = i; j > 0 && better(v[j], v[j - 1]); --j) std::swap(v[j], v[j - 1]);
  }
  return out;
}

ModelComparison compare_models(const ProbabilityVector& probabilities, const FitOptions& options) {
  return compare_models(extend_to_fit_range(probabilities), options);
}

void write_fit_csv(std::ostream& out, const ModelComparison& comparison) {
  out << "model,param1,param2,mean_n,sigma_mean,r_squared\n";
  char line[256];
  for (const auto& f : comparison.ranked) {
    const double p2 = f.parameters.size() > 1 ? f.parameters[1] : 0.0;
    if (f.parameters.size() > 1) {
      std::snprintf(line, sizeof line, "%s,%.12g,%.12g,%.12g,%.6g,%.17g\n",
                    std::string(to_string(f.kind)).c_str(), f.parameters[0], p2,
                    f.mean_photon_number, f.mean_uncertainty, f.r_squared);
    } else {
      std::snprintf(line, sizeof line, "%s,%.12g,,%.12g,%.6g,%.17g\n",
                    std::string(to_string(f.kind)).c_str(), f.parameters[0],
                    f.mean_photon_number, f.mean_uncertainty, f.r_squared);
    }
    out << line;
  }
  for (const auto& fail : comparison.failures) {
    out << to_string(fail.kind) << ",nan,nan,nan,nan,nan\n";
  }
}

void write_pmf_csv(std::ostream& out, const FitInput& input, const ModelComparison& comparison) {
  out << "n,observed";
  for (ModelKind k : kComparedModels) out << ',' << to_string(k);
  out << '\n';
  char cell[64];
  for (int n = 0; n < kFitBins; ++n) {
    std::snprintf(cell, sizeof cell, "%d,%.12g", n, input.observed[n]);
    out << cell;
    for (ModelKind k : kComparedModels) {
      out << ',';
      for (const auto& f : comparison.ranked) {
        if (f.kind == k) {
          std::snprintf(cell, sizeof cell, "%.12g", f.predicted[n]);
          out << cell;
        }
      }
    }
    out << '\n';
  }
}

}  // namespace spdc
