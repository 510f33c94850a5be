#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uaopose/metrics.hpp"
#include "uaopose/refine.hpp"

namespace uaopose {

std::string report_to_json(const EvalReport& report);
// Throws ParseError on missing fields or wrong types.
EvalReport report_from_json(const std::string& text);

struct CurveRow {
  double mean_projection = 0.0;
  double mean_uncertainty = 0.0;
  double mean_total = 0.0;
  std::optional<double> mean_mpjpe_mm;  // only when every trace carries it
};

// Per-iteration means across traces; all traces must have the same length.
std::vector<CurveRow> mean_curves(const std::vector<OptimizationTrace>& traces);
std::string curves_csv(const std::vector<CurveRow>& rows);

std::string error_curve_svg(const std::vector<CurveRow>& rows);
std::string joint_bars_svg(const EvalReport& report, const std::vector<std::string>& joint_names = {});

// Writes report.json, curves.csv, error_curve.svg and joint_uncertainty.svg
// into out_dir (created if needed).
void emit_report(const EvalReport& report, const std::vector<OptimizationTrace>& traces,
                 const std::string& out_dir, const std::vector<std::string>& joint_names = {});

}  // namespace uaopose
