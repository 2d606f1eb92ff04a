#include "spdcstat/distributions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "spdcstat/errors.hpp"

namespace spdc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_mean(double mean, const char* what) {
  if (!std::isfinite(mean) || mean < 0.0) {
    throw DomainError(std::string(what) + " must be finite and >= 0, got " +
                      std::to_string(mean));
  }
}

double poisson_log_pmf(double mu, std::int64_t n) {
  if (mu == 0.0) return n == 0 ? 0.0 : kNegInf;
  const double k = static_cast<double>(n);
  return k * std::log(mu) - mu - std::lgamma(k + 1.0);
}

double thermal_log_pmf(double mu, std::int64_t n) {
  if (mu == 0.0) return n == 0 ? 0.0 : kNegInf;
  const double l1 = std::log1p(mu);
  return -l1 + static_cast<double>(n) * (std::log(mu) - l1);
}

// Gamma(n + r) / Gamma(r) for integer n is the rising factorial, summed in
// log space to stay exact for large r.
double negbin_log_pmf(double r, double p, std::int64_t n) {
  double log_rising = 0.0;
  for (std::int64_t j = 0; j < n; ++j) log_rising += std::log(r + static_cast<double>(j));
  const double k = static_cast<double>(n);
  return log_rising - std::lgamma(k + 1.0) + r * std::log(p) + k * std::log1p(-p);
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Poisson:
      return "poisson";
    case ModelKind::Thermal:
      return "thermal";
    case ModelKind::NegativeBinomial:
      return "negative_binomial";
    case ModelKind::PoissonThermalConvolution:
      return "convolution";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "poisson") return ModelKind::Poisson;
  if (s == "thermal" || s == "bose_einstein") return ModelKind::Thermal;
  if (s == "negative_binomial" || s == "nb" || s == "negbin") return ModelKind::NegativeBinomial;
  if (s == "convolution" || s == "conv" || s == "poisson_thermal_convolution")
    return ModelKind::PoissonThermalConvolution;
  throw DomainError("unknown model kind '" + std::string(name) + "'");
}

int parameter_count(ModelKind kind) {
  return (kind == ModelKind::Poisson || kind == ModelKind::Thermal) ? 1 : 2;
}

PhotonNumberModel PhotonNumberModel::poisson(double mean) {
  require_mean(mean, "Poisson mean");
  return PhotonNumberModel(model::Poisson{mean});
}

PhotonNumberModel PhotonNumberModel::thermal(double mean) {
  require_mean(mean, "thermal mean");
  return PhotonNumberModel(model::Thermal{mean});
}

PhotonNumberModel PhotonNumberModel::negative_binomial(double r, double p) {
  if (!std::isfinite(r) || r <= 0.0)
    throw DomainError("negative binomial r must be > 0, got " + std::to_string(r));
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("negative binomial p must lie in (0, 1), got " + std::to_string(p));
  return PhotonNumberModel(model::NegativeBinomial{r, p});
}

PhotonNumberModel PhotonNumberModel::convolution(double poisson_mean, double thermal_mean) {
  require_mean(poisson_mean, "convolution Poisson mean");
  require_mean(thermal_mean, "convolution thermal mean");
  return PhotonNumberModel(model::Convolution{poisson_mean, thermal_mean});
}

ModelKind PhotonNumberModel::kind() const noexcept {
  return std::visit(Overloaded{
                        [](const model::Poisson&) { return ModelKind::Poisson; },
                        [](const model::Thermal&) { return ModelKind::Thermal; },
                        [](const model::NegativeBinomial&) { return ModelKind::NegativeBinomial; },
                        [](const model::Convolution&) {
                          return ModelKind::PoissonThermalConvolution;
                        },
                    },
                    params_);
}

std::vector<double> PhotonNumberModel::parameter_values() const {
  return std::visit(
      Overloaded{
          [](const model::Poisson& m) { return std::vector<double>{m.mean}; },
          [](const model::Thermal& m) { return std::vector<double>{m.mean}; },
          [](const model::NegativeBinomial& m) { return std::vector<double>{m.r, m.p}; },
          [](const model::Convolution& m) {
            return std::vector<double>{m.poisson_mean, m.thermal_mean};
          },
      },
      params_);
}

PhotonNumberModel make_model(ModelKind kind, const std::vector<double>& parameters) {
  if (parameters.size() != static_cast<std::size_t>(parameter_count(kind))) {
    throw DomainError("model '" + std::string(to_string(kind)) + "' takes " +
                      std::to_string(parameter_count(kind)) + " parameters");
  }
  switch (kind) {
    case ModelKind::Poisson:
      return PhotonNumberModel::poisson(parameters[0]);
    case ModelKind::Thermal:
      return PhotonNumberModel::thermal(parameters[0]);
    case ModelKind::NegativeBinomial:
      return PhotonNumberModel::negative_binomial(parameters[0], parameters[1]);
    case ModelKind::PoissonThermalConvolution:
      return PhotonNumberModel::convolution(parameters[0], parameters[1]);
  }
  throw DomainError("unknown model kind");
}

double log_pmf(const PhotonNumberModel& m, std::int64_t n) {
  if (n < 0) throw DomainError("photon number must be >= 0");
  return std::visit(
      Overloaded{
          [n](const model::Poisson& p) { return poisson_log_pmf(p.mean, n); },
          [n](const model::Thermal& t) { return thermal_log_pmf(t.mean, n); },
          [n](const model::NegativeBinomial& nb) { return negbin_log_pmf(nb.r, nb.p, n); },
          [n](const model::Convolution& c) {
            double acc = kNegInf;
            for (std::int64_t k = 0; k <= n; ++k) {
              acc = log_add(acc, poisson_log_pmf(c.poisson_mean, k) +
                                     thermal_log_pmf(c.thermal_mean, n - k));
            }
            return acc;
          },
      },
      m.params());
}

double pmf(const PhotonNumberModel& m, std::int64_t n) { return std::exp(log_pmf(m, n)); }

std::vector<double> pmf_table(const PhotonNumberModel& m, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t n = 0; n < count; ++n) out[n] = pmf(m, static_cast<std::int64_t>(n));
  return out;
}

double mean(const PhotonNumberModel& m) {
  return std::visit(Overloaded{
                        [](const model::Poisson& p) { return p.mean; },
                        [](const model::Thermal& t) { return t.mean; },
                        [](const model::NegativeBinomial& nb) { return nb.r * (1.0 - nb.p) / nb.p; },
                        [](const model::Convolution& c) { return c.poisson_mean + c.thermal_mean; },
                    },
                    m.params());
}

double variance(const PhotonNumberModel& m) {
  return std::visit(
      Overloaded{
          [](const model::Poisson& p) { return p.mean; },
          [](const model::Thermal& t) { return t.mean + t.mean * t.mean; },
          [](const model::NegativeBinomial& nb) { return nb.r * (1.0 - nb.p) / (nb.p * nb.p); },
          [](const model::Convolution& c) {
            return c.poisson_mean + c.thermal_mean + c.thermal_mean * c.thermal_mean;
          },
      },
      m.params());
}

PhotonNumberModel with_mean(const PhotonNumberModel& m, double new_mean) {
  require_mean(new_mean, "mean");
  return std::visit(
      Overloaded{
          [&](const model::Poisson&) { return PhotonNumberModel::poisson(new_mean); },
          [&](const model::Thermal&) { return PhotonNumberModel::thermal(new_mean); },
          [&](const model::NegativeBinomial& nb) {
            if (new_mean == 0.0) {
              throw DomainError("a negative binomial cannot have mean 0; use a thermal model");
            }
            return PhotonNumberModel::negative_binomial(nb.r, nb.r / (nb.r + new_mean));
          },
          [&](const model::Convolution& c) {
            const double total = c.poisson_mean + c.thermal_mean;
            const double poisson_share = total > 0.0 ? c.poisson_mean / total : 0.5;
            return PhotonNumberModel::convolution(new_mean * poisson_share,
                                                  new_mean * (1.0 - poisson_share));
          },
      },
      m.params());
}

PhotonNumberSampler::PhotonNumberSampler(const PhotonNumberModel& m) {
  std::visit(Overloaded{
                 [&](const model::Poisson& p) {
                   if (p.mean > 0.0) {
                     kind_ = Kind::Poisson;
                     poisson_ = std::poisson_distribution<std::int64_t>(p.mean);
                   }
                 },
                 [&](const model::Thermal& t) {
                   if (t.mean > 0.0) {
                     kind_ = Kind::Geometric;
                     geometric_ = std::geometric_distribution<std::int64_t>(1.0 / (1.0 + t.mean));
                   }
                 },
                 [&](const model::NegativeBinomial& nb) {
                   kind_ = Kind::GammaPoisson;
                   gamma_ = std::gamma_distribution<double>(nb.r, (1.0 - nb.p) / nb.p);
                 },
                 [&](const model::Convolution& c) {
                   poisson_mean_ = c.poisson_mean;
                   thermal_mean_ = c.thermal_mean;
                   if (c.poisson_mean > 0.0)
                     poisson_ = std::poisson_distribution<std::int64_t>(c.poisson_mean);
                   if (c.thermal_mean > 0.0)
                     geometric_ =
                         std::geometric_distribution<std::int64_t>(1.0 / (1.0 + c.thermal_mean));
                   if (c.poisson_mean > 0.0 || c.thermal_mean > 0.0)
                     kind_ = Kind::PoissonPlusGeometric;
                 },
             },
             m.params());
}

std::vector<std::int64_t> sample(const PhotonNumberModel& m, std::uint64_t seed,
                                 std::size_t count) {
  std::mt19937_64 rng(seed);
  PhotonNumberSampler draw(m);
  std::vector<std::int64_t> out(count);
  for (auto& v : out) v = draw(rng);
  return out;
}

}  // namespace spdc
