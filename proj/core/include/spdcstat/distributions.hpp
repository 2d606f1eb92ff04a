#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spdc {

enum class ModelKind { Poisson, Thermal, NegativeBinomial, PoissonThermalConvolution };

std::string_view to_string(ModelKind kind);
/// Accepts the names produced by to_string plus short aliases
/// ("nb", "negbin", "conv", "bose-einstein"). Throws DomainError otherwise.
ModelKind parse_model_kind(std::string_view name);
/// Number of free parameters of a model family (1 or 2).
int parameter_count(ModelKind kind);

namespace model {
struct Poisson {
  double mean = 0.0;
};
/// Single-mode thermal light (Bose-Einstein).
struct Thermal {
  double mean = 0.0;
};
/// P(n) = Gamma(n + r) / (Gamma(r) n!) * p^r * (1 - p)^n, mean r(1 - p)/p.
struct NegativeBinomial {
  double r = 1.0;
  double p = 0.5;
};
/// Sum of independent Poisson and thermal photon numbers.
struct Convolution {
  double poisson_mean = 0.0;
  double thermal_mean = 0.0;
};
}  // namespace model

/// Parametric photon-number distribution. Construction validates the
/// parameters, so every instance is inside its domain.
class PhotonNumberModel {
 public:
  using Params = std::variant<model::Poisson, model::Thermal, model::NegativeBinomial,
                              model::Convolution>;

  static PhotonNumberModel poisson(double mean);
  static PhotonNumberModel thermal(double mean);
  static PhotonNumberModel negative_binomial(double r, double p);
  static PhotonNumberModel convolution(double poisson_mean, double thermal_mean);

  ModelKind kind() const noexcept;
  const Params& params() const noexcept { return params_; }

  /// Parameters in their reported order: (mean), (mean), (r, p), (poisson_mean, thermal_mean).
  std::vector<double> parameter_values() const;

  friend bool operator==(const PhotonNumberModel&, const PhotonNumberModel&) = default;

 private:
  explicit PhotonNumberModel(Params params) : params_(params) {}
  Params params_;
};

/// Build a model of the given family from its reported parameter list.
PhotonNumberModel make_model(ModelKind kind, const std::vector<double>& parameters);

double log_pmf(const PhotonNumberModel& m, std::int64_t n);
double pmf(const PhotonNumberModel& m, std::int64_t n);
/// PMF values for n = 0 .. count-1.
std::vector<double> pmf_table(const PhotonNumberModel& m, std::size_t count);
double mean(const PhotonNumberModel& m);
double variance(const PhotonNumberModel& m);

/// Same family with the mean rescaled. A negative binomial keeps its r, a
/// convolution keeps its Poisson/thermal split.
PhotonNumberModel with_mean(const PhotonNumberModel& m, double new_mean);

/// Draws photon numbers from a model with a caller-owned engine.
class PhotonNumberSampler {
 public:
  explicit PhotonNumberSampler(const PhotonNumberModel& m);

  template <class Engine>
  std::int64_t operator()(Engine& rng) {
    switch (kind_) {
      case Kind::Zero:
        return 0;
      case Kind::Poisson:
        return poisson_(rng);
      case Kind::Geometric:
        return geometric_(rng);
      case Kind::GammaPoisson: {
        const double lambda = gamma_(rng);
        if (lambda <= 0.0) return 0;
        return std::poisson_distribution<std::int64_t>(lambda)(rng);
      }
      case Kind::PoissonPlusGeometric: {
        std::int64_t n = poisson_mean_ > 0.0 ? poisson_(rng) : 0;
        if (thermal_mean_ > 0.0) n += geometric_(rng);
        return n;
      }
    }
    return 0;
  }

 private:
  enum class Kind { Zero, Poisson, Geometric, GammaPoisson, PoissonPlusGeometric };
  Kind kind_ = Kind::Zero;
  double poisson_mean_ = 0.0;
  double thermal_mean_ = 0.0;
  std::poisson_distribution<std::int64_t> poisson_;
  std::geometric_distribution<std::int64_t> geometric_;
  std::gamma_distribution<double> gamma_;
};

/// `count` independent draws, deterministic in `seed` (mt19937_64).
std::vector<std::int64_t> sample(const PhotonNumberModel& m, std::uint64_t seed,
                                 std::size_t count);

}  // namespace spdc
