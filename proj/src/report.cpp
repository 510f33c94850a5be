#include "uaopose/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "uaopose/errors.hpp"
#include "uaopose/synthetic.hpp"

namespace uaopose {

using nlohmann::json;

std::string report_to_json(const EvalReport& r) {
  json j;
  j["mpjpe_mm"] = r.mpjpe_mm;
  j["pa_mpjpe_mm"] = r.pa_mpjpe_mm;
  j["pck_150"] = r.pck_150;
  j["auc"] = r.auc;
  j["per_joint_mpjpe_mm"] = r.per_joint_mpjpe_mm;
  j["per_joint_mean_s"] = r.per_joint_mean_s;
  j["spearman_s_vs_error"] = r.spearman_s_vs_error;
  j["spearman_degenerate"] = r.spearman_degenerate;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.mpjpe_mm = j.at("mpjpe_mm").get<double>();
    r.pa_mpjpe_mm = j.at("pa_mpjpe_mm").get<double>();
    r.pck_150 = j.at("pck_150").get<double>();
    r.auc = j.at("auc").get<double>();
    r.per_joint_mpjpe_mm = j.at("per_joint_mpjpe_mm").get<std::vector<double>>();
    r.per_joint_mean_s = j.at("per_joint_mean_s").get<std::vector<double>>();
    r.spearman_s_vs_error = j.at("spearman_s_vs_error").get<double>();
    r.spearman_degenerate = j.value("spearman_degenerate", false);
    if (r.per_joint_mpjpe_mm.size() != r.per_joint_mean_s.size())
      throw ParseError("per-joint arrays differ in length");
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report.json: ") + e.what());
  }
}

std::vector<CurveRow> mean_curves(const std::vector<OptimizationTrace>& traces) {
  if (traces.empty()) return {};
  const std::size_t len = traces.front().records.size();
  for (const auto& t : traces)
    if (t.records.size() != len) throw ShapeError("mean_curves: traces differ in length");
  std::vector<CurveRow> rows(len);
  const double n = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < len; ++i) {
    double mpjpe = 0.0;
    bool have_mpjpe = true;
    for (const auto& t : traces) {
      const TraceRecord& r = t.records[i];
      rows[i].mean_projection += r.projection;
      rows[i].mean_uncertainty += r.uncertainty;
      rows[i].mean_total += r.total;
      if (r.mpjpe_mm)
        mpjpe += *r.mpjpe_mm;
      else
        have_mpjpe = false;
    }
    rows[i].mean_projection /= n;
    rows[i].mean_uncertainty /= n;
    rows[i].mean_total /= n;
    if (have_mpjpe) rows[i].mean_mpjpe_mm = mpjpe / n;
  }
  return rows;
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::ostringstream os;
  os << "iteration,mean_proj,mean_unc,mean_total,mean_mpjpe_mm\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i << ',' << format_real(r.mean_projection) << ',' << format_real(r.mean_uncertainty) << ','
       << format_real(r.mean_total) << ',';
    if (r.mean_mpjpe_mm) os << format_real(*r.mean_mpjpe_mm);
    os << '\n';
  }
  return os.str();
}

namespace {

constexpr double kWidth = 640, kHeight = 400, kMargin = 60;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string svg_open(const std::string& title) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << escape_xml(title) << "</text>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
     << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
     << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  return os.str();
}

std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) return {lo - 1.0, lo + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string axis_labels(const std::string& x_label, const std::string& y_label, double y_lo,
                        double y_hi) {
  std::ostringstream os;
  os << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << num(kHeight - 15)
     << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_xml(x_label) << "</text>\n"
     << "<text x=\"15\" y=\"" << num(kHeight / 2) << "\" font-size=\"12\" transform=\"rotate(-90 15 "
     << num(kHeight / 2) << ")\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n"
     << "<text x=\"" << kMargin - 5 << "\" y=\"" << kMargin + 4
     << "\" text-anchor=\"end\" font-size=\"10\">" << num(y_hi) << "</text>\n"
     << "<text x=\"" << kMargin - 5 << "\" y=\"" << kHeight - kMargin
     << "\" text-anchor=\"end\" font-size=\"10\">" << num(y_lo) << "</text>\n";
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  try {
    write_text(path.string(), text);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::string error_curve_svg(const std::vector<CurveRow>& rows) {
  const bool use_mpjpe =
      !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const CurveRow& r) { return r.mean_mpjpe_mm.has_value(); });
  std::vector<double> ys;
  for (const auto& r : rows) ys.push_back(use_mpjpe ? *r.mean_mpjpe_mm : r.mean_total);

  std::ostringstream os;
  os << svg_open(use_mpjpe ? "Mean MPJPE vs iteration" : "Mean total loss vs iteration");
  double lo = 0.0, hi = 1.0;
  if (!ys.empty()) std::tie(lo, hi) = padded_range(*std::min_element(ys.begin(), ys.end()),
                                                   *std::max_element(ys.begin(), ys.end()));
  os << axis_labels("iteration", use_mpjpe ? "mean MPJPE (mm)" : "mean total loss", lo, hi);
  if (!ys.empty()) {
    const double span_x = ys.size() > 1 ? static_cast<double>(ys.size() - 1) : 1.0;
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double px = kMargin + (kWidth - 2 * kMargin) * static_cast<double>(i) / span_x;
      const double py = kHeight - kMargin - (kHeight - 2 * kMargin) * (ys[i] - lo) / (hi - lo);
      os << (i ? " " : "") << num(px) << ',' << num(py);
    }
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 14
       << "\" text-anchor=\"end\" font-size=\"10\">" << ys.size() - 1 << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string joint_bars_svg(const EvalReport& report, const std::vector<std::string>& joint_names) {
  const auto& err = report.per_joint_mpjpe_mm;
  const auto& s = report.per_joint_mean_s;
  std::ostringstream os;
  os << svg_open("Per-joint error (blue) and mean log-variance (orange)");
  const double err_hi = err.empty() ? 1.0 : std::max(1e-9, *std::max_element(err.begin(), err.end()));
  double s_lo = 0.0, s_hi = 1.0;
  if (!s.empty()) std::tie(s_lo, s_hi) = padded_range(*std::min_element(s.begin(), s.end()),
                                                      *std::max_element(s.begin(), s.end()));
  os << axis_labels("joint", "MPJPE (mm)", 0.0, err_hi);
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;
  const double slot = err.empty() ? plot_w : plot_w / static_cast<double>(err.size());
  for (std::size_t k = 0; k < err.size(); ++k) {
    const double x0 = kMargin + slot * static_cast<double>(k);
    const double eh = plot_h * err[k] / err_hi;
    os << "<rect x=\"" << num(x0 + 0.1 * slot) << "\" y=\"" << num(kHeight - kMargin - eh)
       << "\" width=\"" << num(0.4 * slot) << "\" height=\"" << num(eh) << "\" fill=\"steelblue\"/>\n";
    if (k < s.size()) {
      const double sh = plot_h * (s[k] - s_lo) / (s_hi - s_lo);
      os << "<rect x=\"" << num(x0 + 0.5 * slot) << "\" y=\"" << num(kHeight - kMargin - sh)
         << "\" width=\"" << num(0.4 * slot) << "\" height=\"" << num(sh) << "\" fill=\"darkorange\"/>\n";
    }
    const std::string label = k < joint_names.size() ? joint_names[k] : std::to_string(k);
    os << "<text x=\"" << num(x0 + 0.5 * slot) << "\" y=\"" << num(kHeight - kMargin + 12)
       << "\" text-anchor=\"end\" font-size=\"8\" transform=\"rotate(-45 " << num(x0 + 0.5 * slot) << ' '
       << num(kHeight - kMargin + 12) << ")\">" << escape_xml(label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(const EvalReport& report, const std::vector<OptimizationTrace>& traces,
                 const std::string& out_dir, const std::vector<std::string>& joint_names) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + out_dir);
  const auto rows = mean_curves(traces);
  write_file(dir / "report.json", report_to_json(report));
  write_file(dir / "curves.csv", curves_csv(rows));
  write_file(dir / "error_curve.svg", error_curve_svg(rows));
  write_file(dir / "joint_uncertainty.svg", joint_bars_svg(report, joint_names));
}

}  // namespace uaopose
