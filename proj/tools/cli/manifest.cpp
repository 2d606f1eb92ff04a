#include "manifest.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <regex>

#include <json.hpp>

#include "spdcstat/errors.hpp"

namespace spdc::cli {

namespace {

using nlohmann::json;

// Typed access to a JSON object that reports failures by dotted path.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(name() + " must be an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_[key].is_null(); }

  const json& raw(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required field '" + field(key) + "'");
    return node_.at(key);
  }

  Section sub(const std::string& key) const { return Section(raw(key), field(key)); }

  std::optional<Section> optional_sub(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return sub(key);
  }

  double number(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError("field '" + field(key) + "' must be a number");
    return v.get<double>();
  }

  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::uint64_t unsigned_integer(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError("field '" + field(key) + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? unsigned_integer(key) : fallback;
  }

  std::string text(const std::string& key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError("field '" + field(key) + "' must be a string");
    return v.get<std::string>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  const json& node() const { return node_; }
  const std::string& name() const { return path_; }

 private:
  const json& node_;
  std::string path_;
};

// Runs a library validator and re-labels its DomainError with the config field.
template <class F>
void check(const std::string& field, F&& f) {
  try {
    f();
  } catch (const DomainError& e) {
    throw ConfigError("invalid '" + field + "': " + e.what());
  }
}

std::optional<SpectralModel> read_spectral_model(const Section& source) {
  if (!source.has("spectral_model")) return default_spectral_model();
  const json& v = source.raw("spectral_model");
  const std::string field = source.field("spectral_model");
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    if (name == "default") return default_spectral_model();
    if (name == "none") return std::nullopt;
    throw ConfigError("field '" + field + "' must be \"default\", \"none\" or a table");
  }
  if (!v.is_array()) throw ConfigError("field '" + field + "' must be a string or an array");
  SpectralModel model;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Section entry(v[i], field + "[" + std::to_string(i) + "]");
    const double mean = entry.number("mean");
    check(entry.field("mean"), [&] {
      model.set(entry.number("wavelength_nm"), entry.number("power_mw"), mean);
    });
  }
  return model;
}

PhotonNumberModel read_source_model(const Section& source, bool has_spectral_model) {
  const std::string model_field = source.field("model");
  ModelKind kind;
  check(model_field, [&] { kind = parse_model_kind(source.text("model")); });
  // With a spectral model the mean is replaced per setting; 1 keeps the shape valid.
  const double mean = has_spectral_model ? source.number("mean", 1.0) : source.number("mean");
  PhotonNumberModel model = PhotonNumberModel::thermal(0.0);
  check(source.field("mean"), [&] {
    if (mean < 0.0) throw DomainError("mean must be >= 0");
    switch (kind) {
      case ModelKind::Poisson:
        model = PhotonNumberModel::poisson(mean);
        break;
      case ModelKind::Thermal:
        model = PhotonNumberModel::thermal(mean);
        break;
      case ModelKind::NegativeBinomial: {
        const double r = source.number("negative_binomial_r", 1.0);
        if (mean == 0.0) {
          model = PhotonNumberModel::thermal(0.0);
        } else {
          model = PhotonNumberModel::negative_binomial(r, r / (r + mean));
        }
        break;
      }
      case ModelKind::PoissonThermalConvolution: {
        const double f = source.number("poisson_fraction", 0.5);
        if (!(f >= 0.0 && f <= 1.0)) throw DomainError("poisson_fraction must lie in [0, 1]");
        model = PhotonNumberModel::convolution(f * mean, (1.0 - f) * mean);
        break;
      }
    }
  });
  return model;
}

IrfConfig read_irf(const Section& det) {
  const auto irf_section = det.optional_sub("irf");
  if (!irf_section) return default_irf();
  const Section& s = *irf_section;
  IrfConfig irf;
  if (s.has("rising_sigma_ps") || s.has("tail_tau_ps")) {
    irf.rising_sigma_ps = s.number("rising_sigma_ps");
    irf.tail_tau_ps = s.number("tail_tau_ps");
  } else {
    check(s.field("fwhm_ps"), [&] {
      irf = irf_from_fwhm(s.number("fwhm_ps", 658.0), s.number("tail_to_rise", 3.0));
    });
  }
  irf.delay_ps = s.number("delay_ps", irf.delay_ps);
  return irf;
}

std::vector<std::uint64_t> read_windows(const Section& run) {
  const json& v = run.raw("windows");
  if (!v.is_array()) throw ConfigError("field '" + run.field("windows") + "' must be an array");
  std::vector<std::uint64_t> out;
  for (const auto& w : v) {
    if (!w.is_number_unsigned()) {
      throw ConfigError("field '" + run.field("windows") + "' must hold positive integers");
    }
    out.push_back(w.get<std::uint64_t>());
  }
  return out;
}

std::vector<Setting> read_settings(const Section& run) {
  const json& v = run.raw("settings");
  std::vector<Setting> out;
  if (v.is_string() && v.get<std::string>() == "grid") {
    for (double wl : kWavelengthSettingsNm) {
      for (double p : kPumpPowersMw) out.push_back({wl, p});
    }
    return out;
  }
  if (!v.is_array()) {
    throw ConfigError("field '" + run.field("settings") + "' must be \"grid\" or an array");
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Section s(v[i], run.field("settings") + "[" + std::to_string(i) + "]");
    out.push_back({s.number("wavelength_nm"), s.number("power_mw")});
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void RunManifest::validate() const {
  if (windows.empty()) throw ConfigError("'run.windows' must not be empty");
  for (auto w : windows) {
    if (w == 0) throw ConfigError("'run.windows' entries must be >= 1 tick");
  }
  if (settings.empty()) throw ConfigError("'run.settings' must not be empty");
  check("source", [&] { source.validate(); });
  check("detectors", [&] { detectors.validate(); });
  check("detectors.eta_uncertainty", [&] { efficiency.validate(); });
  if (threads == 0) throw ConfigError("'run.threads' must be >= 1");
}

RunManifest default_manifest() {
  RunManifest m;
  m.efficiency.eta_setup = m.detectors.eta_setup;
  return m;
}

RunManifest load_manifest(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config file " + config_path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + config_path.string() + " is not valid JSON: " + e.what());
  }

  RunManifest m = default_manifest();
  m.config_path = config_path;
  const auto base = config_path.parent_path();
  const Section root(doc, "");

  const Section source = root.sub("source");
  m.source.repetition_rate_hz = source.number("repetition_rate_hz", m.source.repetition_rate_hz);
  m.source.pulse_count = source.unsigned_integer("pulse_count");
  m.source.spectral_model = read_spectral_model(source);
  m.source.source_model = read_source_model(source, m.source.spectral_model.has_value());

  const Section det = root.sub("detectors");
  m.detectors.eta_setup = det.number("eta_setup");
  m.detectors.dark_rate_per_channel_hz =
      det.number("dark_rate_per_channel_hz", m.detectors.dark_rate_per_channel_hz);
  m.detectors.irf = read_irf(det);
  m.detectors.dead_time_ns = det.number("dead_time_ns", m.detectors.dead_time_ns);
  const auto tick = det.unsigned_integer("tick_picoseconds", m.detectors.tick_picoseconds);
  if (tick == 0 || tick > UINT32_MAX) {
    throw ConfigError("field 'detectors.tick_picoseconds' must be in 1..2^32-1");
  }
  m.detectors.tick_picoseconds = static_cast<std::uint32_t>(tick);
  m.efficiency.eta_setup = m.detectors.eta_setup;
  m.efficiency.eta_uncertainty = det.number("eta_uncertainty", m.efficiency.eta_uncertainty);

  if (const auto run = root.optional_sub("run")) {
    m.seed = run->unsigned_integer("seed", m.seed);
    if (run->has("windows")) m.windows = read_windows(*run);
    if (run->has("settings")) m.settings = read_settings(*run);
    if (run->has("output")) m.output_dir = resolve(base, run->text("output"));
    if (run->has("inputs")) {
      const json& v = run->raw("inputs");
      if (!v.is_array()) throw ConfigError("field 'run.inputs' must be an array of paths");
      for (const auto& p : v) {
        if (!p.is_string()) throw ConfigError("field 'run.inputs' must be an array of paths");
        m.inputs.push_back(resolve(base, p.get<std::string>()));
      }
    }
    m.threads = static_cast<unsigned>(run->unsigned_integer("threads", m.threads));
    const auto format = run->text("report_format", "csv");
    if (format == "csv") {
      m.report_format = ReportFormat::Csv;
    } else if (format == "tsv") {
      m.report_format = ReportFormat::Tsv;
    } else {
      throw ConfigError("field 'run.report_format' must be \"csv\" or \"tsv\"");
    }
    const auto scaling = run->text("scaling", "per_event");
    if (scaling == "per_event") {
      m.scaling = ScalingMode::PerEvent;
    } else if (scaling == "loss_inversion") {
      m.scaling = ScalingMode::LossInversion;
    } else {
      throw ConfigError("field 'run.scaling' must be \"per_event\" or \"loss_inversion\"");
    }
    const auto weighting = run->text("weighting", "unweighted");
    if (weighting == "unweighted") {
      m.fit_options.weighting = FitWeighting::Unweighted;
    } else if (weighting == "inverse_variance") {
      m.fit_options.weighting = FitWeighting::InverseVariance;
    } else {
      throw ConfigError("field 'run.weighting' must be \"unweighted\" or \"inverse_variance\"");
    }
  }
  m.validate();
  return m;
}

std::uint64_t setting_seed(std::uint64_t seed, std::size_t setting_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(setting_index), 0x53504443u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t(out[0]) << 32) | out[1];
}

std::string setting_stem(const Setting& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%gnm_%gmW", s.wavelength_nm, s.power_mw);
  return buf;
}

std::optional<Setting> parse_setting_stem(const std::string& stem) {
  static const std::regex pattern(R"(^([0-9]+(?:\.[0-9]+)?)nm_([0-9]+(?:\.[0-9]+)?)mW$)");
  std::smatch m;
  if (!std::regex_match(stem, m, pattern)) return std::nullopt;
  return Setting{std::stod(m[1]), std::stod(m[2])};
}

}  // namespace spdc::cli
