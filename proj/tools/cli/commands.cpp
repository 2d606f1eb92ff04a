#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "spdcstat/errors.hpp"

namespace spdc::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kIndexFile = "analysis_index.csv";

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot create " + path.string());
  f << text;
  f.flush();
  if (!f) throw std::ios_base::failure("write failed: " + path.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::ios_base::failure("cannot create output directory " + dir.string());
  }
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const fs::path& source) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(source.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

Table read_table(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::ios_base::failure("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(f, line)) throw FormatError(path.string() + ": empty file");
  t.header = split(line, ',');
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto row = split(line, ',');
    if (row.size() != t.header.size()) {
      throw FormatError(path.string() + ": row with " + std::to_string(row.size()) +
                        " cells, expected " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

double to_number(const std::string& cell, const fs::path& source) {
  if (cell.empty()) return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError(source.string() + ": '" + cell + "' is not a number");
  }
}

std::string render(const Table& t, ReportFormat format) {
  const char sep = format == ReportFormat::Tsv ? '\t' : ',';
  std::string out;
  const auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += sep;
      out += cells[i];
    }
    out += '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  return out;
}

std::string report_extension(ReportFormat format) {
  return format == ReportFormat::Tsv ? ".tsv" : ".csv";
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ext) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw std::ios_base::failure("input not found: " + p.string());
      out.push_back(p);
    }
  }
  if (out.empty()) throw ConfigError("no input files given");
  return out;
}

// Setting from the simulation sidecar, else from the file name.
std::optional<Setting> setting_for(const fs::path& stream_path) {
  fs::path sidecar = stream_path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar)) {
    std::ifstream f(sidecar);
    try {
      const auto doc = nlohmann::json::parse(f);
      return Setting{doc.at("wavelength_nm").get<double>(), doc.at("power_mw").get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(sidecar.string() + ": " + e.what());
    }
  }
  return parse_setting_stem(stream_path.stem().string());
}

std::string fits_csv(const ModelComparison& c) {
  std::ostringstream s;
  write_fit_csv(s, c);
  return s.str();
}

std::string pmf_csv(const FitInput& in, const ModelComparison& c) {
  std::ostringstream s;
  write_pmf_csv(s, in, c);
  return s.str();
}

void log_failures(const std::string& what, const ModelComparison& c) {
  for (const auto& f : c.failures) {
    spdlog::warn("{}: {} fit failed: {}", what, to_string(f.kind), f.message);
  }
}

}  // namespace

void cmd_simulate(const RunManifest& m, std::ostream& out) {
  if (m.config_path.empty()) throw ConfigError("simulate requires --config");
  if (m.source.spectral_model) {
    for (std::size_t i = 0; i < m.settings.size(); ++i) {
      const auto& s = m.settings[i];
      if (!m.source.spectral_model->contains(s.wavelength_nm, s.power_mw)) {
        throw ConfigError("run.settings[" + std::to_string(i) + "] (" + setting_stem(s) +
                          ") is not in source.spectral_model");
      }
    }
  }
  ensure_directory(m.output_dir);

  for (std::size_t i = 0; i < m.settings.size(); ++i) {
    const auto& s = m.settings[i];
    const std::string stem = setting_stem(s);
    const SimulationSetting setting{s.wavelength_nm, s.power_mw, setting_seed(m.seed, i)};
    const fs::path path = m.output_dir / (stem + ".ptg");
    spdlog::info("simulating {} (seed {})", stem, setting.seed);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::ios_base::failure("cannot create " + path.string());
    SimulationSummary summary;
    {
      TagWriter writer(f, simulation_header(m.source, m.detectors));
      summary = simulate_to(
          m.source, m.detectors, setting,
          [&](std::span<const TagRecord> records) { writer.write(records); }, m.threads);
      writer.flush();
    }
    f.close();
    if (!f) throw std::ios_base::failure("write failed: " + path.string());

    nlohmann::ordered_json sidecar;
    sidecar["wavelength_nm"] = s.wavelength_nm;
    sidecar["power_mw"] = s.power_mw;
    sidecar["seed"] = setting.seed;
    sidecar["pulses"] = summary.pulses;
    sidecar["detector_events"] = summary.detector_events;
    sidecar["dark_events"] = summary.dark_events;
    sidecar["dead_time_losses"] = summary.dead_time_losses;
    sidecar["source_mean"] = summary.source_mean;
    sidecar["eta_setup"] = m.detectors.eta_setup;
    sidecar["tick_picoseconds"] = m.detectors.tick_picoseconds;
    write_text(m.output_dir / (stem + ".json"), sidecar.dump(2) + "\n");

    out << path.filename().string() << ": pulses=" << summary.pulses
        << " detector_events=" << summary.detector_events << '\n';
  }
}

void cmd_analyze(const RunManifest& m, std::ostream& out) {
  const auto inputs = expand_inputs(m.inputs, ".ptg");
  ensure_directory(m.output_dir);
  const auto factors = correction_factors(NetworkConfig{});

  Table index;
  index.header = {"stem",      "wavelength_nm", "power_mw", "window_ticks", "opportunities",
                  "histogram", "probabilities", "fits",     "pmf",          "best_model"};
  for (const auto& input : inputs) {
    const std::string stem = input.stem().string();
    spdlog::info("analyzing {}", input.string());
    std::ifstream f(input, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot open " + input.string());
    TagReader reader(f);
    const auto histograms = sweep_windows(reader, m.windows);
    const auto setting = setting_for(input);

    for (const auto& h : histograms) {
      const std::string base = stem + "_w" + std::to_string(h.window_ticks);
      const std::string names[4] = {base + "_histogram.csv", base + "_probabilities.csv",
                                    base + "_fits.csv", base + "_pmf.csv"};

      std::ostringstream hist_csv;
      write_histogram_csv(hist_csv, std::span(&h, 1));
      write_text(m.output_dir / names[0], hist_csv.str());

      const auto probs = correct(h, m.efficiency, factors, m.scaling);
      if (probs.corrected.any_clamped()) {
        spdlog::warn("{}: negative corrected probabilities clamped to 0", base);
      }
      std::ostringstream prob_csv;
      write_probability_csv(prob_csv, probs);
      write_text(m.output_dir / names[1], prob_csv.str());

      const FitInput fit_input = extend_to_fit_range(probs.corrected);
      const auto comparison = compare_models(fit_input, m.fit_options);
      log_failures(base, comparison);
      write_text(m.output_dir / names[2], fits_csv(comparison));
      write_text(m.output_dir / names[3], pmf_csv(fit_input, comparison));

      index.rows.push_back(
          {stem, setting ? fmt_double(setting->wavelength_nm) : "",
           setting ? fmt_double(setting->power_mw) : "", std::to_string(h.window_ticks),
           std::to_string(h.opportunities), names[0], names[1], names[2], names[3],
           comparison.ranked.empty() ? "" : std::string(to_string(comparison.ranked[0].kind))});
    }
    out << input.filename().string() << ": " << histograms.size() << " windows, "
        << histograms.front().opportunities << " opportunities\n";
  }
  write_text(m.output_dir / kIndexFile, render(index, ReportFormat::Csv));
}

void cmd_fit(const RunManifest& m, std::ostream& out) {
  const auto inputs = expand_inputs(m.inputs, ".csv");
  ensure_directory(m.output_dir);
  for (const auto& input : inputs) {
    const Table t = read_table(input);
    const auto n_col = t.column("n", input);
    const auto p_col = t.column("p_true", input);
    const auto s_col = t.column("sigma_true", input);
    if (t.rows.size() != static_cast<std::size_t>(kProbabilityBins)) {
      throw FormatError(input.string() + ": expected rows for n = 0..4");
    }
    ProbabilityVector v;
    for (const auto& row : t.rows) {
      const double n = to_number(row[n_col], input);
      if (!(n >= 0 && n < kProbabilityBins) || n != std::floor(n)) {
        throw FormatError(input.string() + ": bad photon number " + row[n_col]);
      }
      const int k = static_cast<int>(n);
      v.p[k] = to_number(row[p_col], input);
      const double sigma = to_number(row[s_col], input);
      v.covariance(k, k) = std::isfinite(sigma) ? sigma * sigma : 0.0;
    }

    std::string stem = input.stem().string();
    const std::string suffix = "_probabilities";
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());

    const FitInput fit_input = extend_to_fit_range(v);
    const auto comparison = compare_models(fit_input, m.fit_options);
    log_failures(stem, comparison);
    write_text(m.output_dir / (stem + "_fits.csv"), fits_csv(comparison));
    write_text(m.output_dir / (stem + "_pmf.csv"), pmf_csv(fit_input, comparison));
    out << input.filename().string() << ": "
        << (comparison.ranked.empty() ? "no model converged"
                                      : "best " + std::string(to_string(comparison.ranked[0].kind)))
        << '\n';
  }
}

void cmd_report(const RunManifest& m, std::ostream& out) {
  const std::vector<fs::path> dirs = m.inputs.empty() ? std::vector<fs::path>{m.output_dir} : m.inputs;

  struct Row {
    std::string stem;
    double wavelength = std::nan("");
    double power = std::nan("");
    std::uint64_t window = 0;
    std::vector<std::string> fit;  // negative binomial row of the fit CSV
    std::string best;
    Table pmf;
  };
  std::vector<Row> rows;
  for (const auto& dir : dirs) {
    const fs::path index_path = dir / kIndexFile;
    if (!fs::exists(index_path)) {
      throw std::ios_base::failure("missing " + index_path.string() + "; run analyze first");
    }
    const Table index = read_table(index_path);
    for (const auto& r : index.rows) {
      Row row;
      row.stem = r[index.column("stem", index_path)];
      row.wavelength = to_number(r[index.column("wavelength_nm", index_path)], index_path);
      row.power = to_number(r[index.column("power_mw", index_path)], index_path);
      row.window = static_cast<std::uint64_t>(
          to_number(r[index.column("window_ticks", index_path)], index_path));
      row.best = r[index.column("best_model", index_path)];

      const fs::path fits_path = dir / r[index.column("fits", index_path)];
      const Table fits = read_table(fits_path);
      const auto model_col = fits.column("model", fits_path);
      row.fit = {"nan", "nan", "nan"};
      for (const auto& f : fits.rows) {
        if (f[model_col] == to_string(ModelKind::NegativeBinomial)) {
          row.fit = {f[fits.column("mean_n", fits_path)], f[fits.column("sigma_mean", fits_path)],
                     f[fits.column("r_squared", fits_path)]};
        }
      }
      row.pmf = read_table(dir / r[index.column("pmf", index_path)]);
      rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw std::ios_base::failure("analysis index lists no results");

  // NaN settings (unknown wavelength) sort last, ties broken by stem.
  const auto key = [](double v) { return std::isnan(v) ? INFINITY : v; };
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (key(a.wavelength) != key(b.wavelength)) return key(a.wavelength) < key(b.wavelength);
    if (key(a.power) != key(b.power)) return key(a.power) < key(b.power);
    if (a.stem != b.stem) return a.stem < b.stem;
    return a.window < b.window;
  });
  std::uint64_t report_window = rows.front().window;
  for (const auto& r : rows) report_window = std::min(report_window, r.window);

  const auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  Table power, window, bars;
  power.header = {"stem", "wavelength_nm", "power_mw", "window_ticks", "mean_n", "sigma_mean",
                  "r_squared"};
  window.header = {"stem",   "wavelength_nm", "power_mw", "window_ticks",
                   "mean_n", "sigma_mean",    "r_squared", "best_model"};
  bars.header = {"stem", "wavelength_nm", "power_mw", "window_ticks", "n", "observed",
                 "poisson", "negative_binomial", "convolution"};
  for (const auto& r : rows) {
    std::vector<std::string> common{r.stem, cell(r.wavelength), cell(r.power),
                                    std::to_string(r.window)};
    auto w = common;
    w.insert(w.end(), r.fit.begin(), r.fit.end());
    w.push_back(r.best);
    window.rows.push_back(std::move(w));
    if (r.window != report_window) continue;
    auto p = common;
    p.insert(p.end(), r.fit.begin(), r.fit.end());
    power.rows.push_back(std::move(p));
    for (const auto& pr : r.pmf.rows) {
      auto b = common;
      for (const char* col : {"n", "observed", "poisson", "negative_binomial", "convolution"}) {
        b.push_back(pr[r.pmf.column(col, r.stem)]);
      }
      bars.rows.push_back(std::move(b));
    }
  }

  ensure_directory(m.output_dir);
  const auto ext = report_extension(m.report_format);
  write_text(m.output_dir / ("power_dependence" + ext), render(power, m.report_format));
  write_text(m.output_dir / ("window_dependence" + ext), render(window, m.report_format));
  write_text(m.output_dir / ("pmf_bars" + ext), render(bars, m.report_format));
  out << "report: " << power.rows.size() << " power rows, " << window.rows.size()
      << " window rows, " << bars.rows.size() << " pmf rows\n";
}

}  // namespace spdc::cli
