#pragma once

#include "smot/calibration.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace smot {

/// Writes the CSV set (convergence, levels, smiles, local vol, marginals at the
/// maturities) plus run_info.json under config.output_dir, and SVG plots when
/// config.emit_plots is set. Returns the written paths. Throws std::runtime_error
/// with the offending path on IO failure.
std::vector<std::filesystem::path> emit_artifacts(const CalibrationResult& result, const RunConfig& config);

/// One polyline of an SVG plot.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal standalone SVG line plot. Non-finite points are skipped; vertical
/// markers are drawn as dashed lines at the given x positions.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series, const std::vector<double>& markers = {});

} // namespace smot
