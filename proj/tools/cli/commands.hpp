#pragma once

#include <iosfwd>

#include "manifest.hpp"

namespace spdc::cli {

/// Writes `<output>/<stem>.ptg` and a `<stem>.json` sidecar per setting.
void cmd_simulate(const RunManifest& manifest, std::ostream& out);

/// Per input stream and window: histogram, probability, fit and PMF CSVs,
/// plus `analysis_index.csv` listing them.
void cmd_analyze(const RunManifest& manifest, std::ostream& out);

/// Refits probability CSVs produced by analyze.
void cmd_fit(const RunManifest& manifest, std::ostream& out);

/// Tidy plot tables from an analysis directory: power_dependence,
/// window_dependence and pmf_bars.
void cmd_report(const RunManifest& manifest, std::ostream& out);

}  // namespace spdc::cli
