#include "skyloop/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace skyloop::eval {

using nlohmann::json;

IndexPairs associate(const Trajectory& est, const Trajectory& ref, double max_dt) {
  return traj::associate(est, ref, max_dt);
}

ErrorSeries translation_error(const Trajectory& est_aligned, const Trajectory& ref, const IndexPairs& pairs) {
  ErrorSeries s;
  s.unit = Unit::Meters;
  for (const auto& [i, j] : pairs) {
    s.timestamps.push_back(ref[j].timestamp);
    s.values.push_back((est_aligned[i].pose.translation - ref[j].pose.translation).norm());
  }
  return s;
}

ErrorSeries rotation_error(const Trajectory& est_aligned, const Trajectory& ref, const IndexPairs& pairs) {
  ErrorSeries s;
  s.unit = Unit::Radians;
  for (const auto& [i, j] : pairs) {
    const auto a = geom::to_tait_bryan(est_aligned[i].pose.rotation);
    const auto b = geom::to_tait_bryan(ref[j].pose.rotation);
    const geom::Vec3 d(geom::wrap_angle(a.yaw - b.yaw), geom::wrap_angle(a.pitch - b.pitch),
                       geom::wrap_angle(a.roll - b.roll));
    s.timestamps.push_back(ref[j].timestamp);
    s.values.push_back(d.norm());
  }
  return s;
}

Summary summarize(const ErrorSeries& series) {
  if (series.values.empty()) throw Error(ErrorCode::EmptySeries, "cannot summarize an empty series");
  Summary s;
  double sum = 0.0;
  double sq = 0.0;
  s.max = series.values.front();
  for (double v : series.values) {
    sum += v;
    sq += v * v;
    s.max = std::max(s.max, v);
  }
  const double n = static_cast<double>(series.values.size());
  s.mean = sum / n;
  s.rmse = std::sqrt(sq / n);
  return s;
}

std::string_view to_string(AlignMode mode) {
  switch (mode) {
    case AlignMode::Similarity: return "similarity";
    case AlignMode::Rigid: return "rigid";
    case AlignMode::None: return "none";
  }
  return "none";
}

AlignMode parse_align_mode(std::string_view s) {
  if (s == "sim3" || s == "similarity") return AlignMode::Similarity;
  if (s == "se3" || s == "rigid") return AlignMode::Rigid;
  if (s == "none") return AlignMode::None;
  throw Error(ErrorCode::InvalidArgument, "unknown alignment mode: " + std::string(s));
}

MetricsReport evaluate(const Trajectory& est, const Trajectory& ref, AlignMode mode, Trajectory* aligned) {
  Trajectory moved = est;
  if (mode != AlignMode::None) {
    const traj::Alignment al = traj::align(est, ref, mode == AlignMode::Similarity);
    moved = traj::transform(est, al.transform);
  }
  double max_dt = 0.5;
  if (ref.size() >= 2) {
    std::vector<double> periods;
    for (std::size_t i = 1; i < ref.size(); ++i) periods.push_back(ref[i].timestamp - ref[i - 1].timestamp);
    std::nth_element(periods.begin(), periods.begin() + static_cast<std::ptrdiff_t>(periods.size() / 2),
                     periods.end());
    max_dt = 0.5 * periods[periods.size() / 2];
  }
  const IndexPairs pairs = traj::associate(moved, ref, max_dt);
  MetricsReport r;
  r.translation = summarize(translation_error(moved, ref, pairs));
  r.rotation = summarize(rotation_error(moved, ref, pairs));
  r.samples = pairs.size();
  r.alignment = mode;
  if (aligned != nullptr) *aligned = std::move(moved);
  return r;
}

namespace {

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"max", s.max}, {"rmse", s.rmse}}; }

Summary summary_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("max").get<double>(), j.at("rmse").get<double>()};
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  const json j = {{"translation", summary_json(report.translation)},
                  {"rotation", summary_json(report.rotation)},
                  {"samples", report.samples},
                  {"alignment", std::string(to_string(report.alignment))}};
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.translation = summary_from(j.at("translation"));
    r.rotation = summary_from(j.at("rotation"));
    r.samples = j.at("samples").get<std::size_t>();
    r.alignment = parse_align_mode(j.at("alignment").get<std::string>());
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
}

std::string format_report_table(const MetricsReport& report) {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-12s %14s %18s\n", "Metric", "Position (m)", "Orientation (rad)");
  out += buf;
  const std::pair<const char*, double Summary::*> rows[] = {
      {"Mean Error", &Summary::mean}, {"Max Error", &Summary::max}, {"RMSE", &Summary::rmse}};
  for (const auto& [label, field] : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %14.3f %18.3f\n", label, report.translation.*field,
                  report.rotation.*field);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "samples: %zu, alignment: %s\n", report.samples,
                std::string(to_string(report.alignment)).c_str());
  out += buf;
  return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  os << text;
  if (!os) throw Error(ErrorCode::IoFailure, "failed writing " + path);
}

}  // namespace

void emit_report(const MetricsReport& report, const std::string& path) {
  write_text(path, report_to_json(report) + "\n");
  write_text(std::filesystem::path(path).replace_extension(".txt").string(), format_report_table(report));
}

std::string trajectory_plot_svg(const std::vector<PlotSeries>& series) {
  constexpr double kW = 640.0;
  constexpr double kH = 480.0;
  constexpr double kMargin = 60.0;
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  for (const auto& s : series) {
    for (const auto& p : s.positions) {
      x0 = std::min(x0, p.x());
      x1 = std::max(x1, p.x());
      y0 = std::min(y0, p.y());
      y1 = std::max(y1, p.y());
    }
  }
  if (!std::isfinite(x0)) {
    x0 = y0 = 0.0;
    x1 = y1 = 1.0;
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-6});
  const double scale = std::min(kW - 2 * kMargin, kH - 2 * kMargin) / span;
  auto sx = [&](double x) { return kMargin + (x - x0) * scale; };
  auto sy = [&](double y) { return kH - kMargin - (y - y0) * scale; };

  std::ostringstream os;
  char buf[160];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
  os << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", kMargin,
                kH - kMargin, kW - kMargin, kH - kMargin);
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", kMargin,
                kMargin, kMargin, kH - kMargin);
  os << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"14\">x (m)</text>\n",
                kW / 2, kH - 15.0);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"15\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 15 %.1f)\">y (m)</text>\n",
                kH / 2, kH / 2);
  os << buf;
  for (int i = 0; i <= 4; ++i) {
    const double vx = x0 + span * i / 4.0;
    const double vy = y0 + span * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"10\">%.2f</text>\n",
                  sx(vx), kH - kMargin + 15.0, vx);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">%.2f</text>\n",
                  kMargin - 5.0, sy(vy) + 3.0, vy);
    os << buf;
  }
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  int legend = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = s.reference ? "#222222" : palette[k % 5];
    const char* dash = s.reference ? "" : " stroke-dasharray=\"6 4\"";
    if (!s.positions.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << " points=\"";
      for (std::size_t i = 0; i < s.positions.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", sx(s.positions[i].x()), sy(s.positions[i].y()));
        os << buf;
      }
      os << "\"/>\n";
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                  kMargin + 10.0, kMargin - 30.0 + 14.0 * legend++, color, s.label.c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

void emit_trajectory_plot(const std::vector<PlotSeries>& series, const std::string& path) {
  write_text(path, trajectory_plot_svg(series));
}

void SuccessTable::validate() const {
  if (values.size() != rows.size()) throw Error(ErrorCode::InvalidArgument, "row labels do not match the table");
  for (const auto& r : values) {
    if (r.size() != cols.size()) throw Error(ErrorCode::InvalidArgument, "success table is not rectangular");
    for (double v : r) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "success rate outside [0, 1]");
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

SuccessTable read_success_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  SuccessTable t;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv(line);
    if (header) {
      if (cells.size() < 2) throw Error(ErrorCode::ParseError, "success table header needs environments");
      t.cols.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    if (cells.size() != t.cols.size() + 1) throw Error(ErrorCode::ParseError, "ragged success table row");
    t.rows.push_back(cells[0]);
    std::vector<double> r;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cells[i], &used));
        if (used != cells[i].size()) throw std::invalid_argument(cells[i]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad success rate: " + cells[i]);
      }
    }
    t.values.push_back(std::move(r));
  }
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return t;
}

void write_success_table(const std::string& path, const SuccessTable& table) {
  table.validate();
  std::ostringstream os;
  os << "maneuver";
  for (const auto& c : table.cols) os << ',' << c;
  os << '\n';
  char buf[40];
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    os << table.rows[i];
    for (double v : table.values[i]) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      os << buf;
    }
    os << '\n';
  }
  write_text(path, os.str());
}

AnovaResult anova_two_way_no_rep(const SuccessTable& table) {
  table.validate();
  return anova_two_way_no_rep(table.values);
}

AnovaResult anova_two_way_no_rep(const std::vector<std::vector<double>>& values) {
  const std::size_t r = values.size();
  const std::size_t c = r > 0 ? values[0].size() : 0;
  if (r < 2 || c < 2) throw Error(ErrorCode::DegenerateTable, "two-way ANOVA needs at least 2 rows and 2 columns");
  for (const auto& row : values) {
    if (row.size() != c) throw Error(ErrorCode::InvalidArgument, "table is not rectangular");
  }
  std::vector<double> row_mean(r, 0.0);
  std::vector<double> col_mean(c, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      row_mean[i] += values[i][j];
      col_mean[j] += values[i][j];
      grand += values[i][j];
    }
  }
  for (auto& m : row_mean) m /= static_cast<double>(c);
  for (auto& m : col_mean) m /= static_cast<double>(r);
  grand /= static_cast<double>(r * c);

  AnovaResult out;
  for (std::size_t i = 0; i < r; ++i) out.rows.ss += c * (row_mean[i] - grand) * (row_mean[i] - grand);
  for (std::size_t j = 0; j < c; ++j) out.cols.ss += r * (col_mean[j] - grand) * (col_mean[j] - grand);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = values[i][j] - grand;
      out.ss_total += d * d;
      const double e = values[i][j] - row_mean[i] - col_mean[j] + grand;
      out.error.ss += e * e;
    }
  }
  out.rows.df = static_cast<double>(r - 1);
  out.cols.df = static_cast<double>(c - 1);
  out.error.df = static_cast<double>((r - 1) * (c - 1));
  out.rows.ms = out.rows.ss / out.rows.df;
  out.cols.ms = out.cols.ss / out.cols.df;
  out.error.ms = out.error.ss / out.error.df;
  // Residuals at rounding level count as zero.
  if (!(out.error.ms > 1e-12 * out.ss_total)) {
    throw Error(ErrorCode::ZeroErrorVariance, "error mean square is zero; F is undefined");
  }
  for (FactorStats* f : {&out.rows, &out.cols}) {
    f->f = f->ms / out.error.ms;
    f->p = f_sf(f->f, f->df, out.error.df);
  }
  return out;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "paired samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "paired t-test needs at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) throw Error(ErrorCode::ZeroVariance, "all paired differences are equal");
  TTestResult r;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = static_cast<double>(n - 1);
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidArgument, "x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double f_sf(double f, double d1, double d2) {
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

namespace {

std::string format_p(double p) {
  char buf[32];
  if (p < 0.001) return "p < 0.001";
  std::snprintf(buf, sizeof buf, "p = %.3f", p);
  return buf;
}

}  // namespace

std::string format_anova(const AnovaResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "environment: F(%g, %g) = %.3f, %s\nmaneuver: F(%g, %g) = %.3f, %s\n", r.cols.df,
                r.error.df, r.cols.f, format_p(r.cols.p).c_str(), r.rows.df, r.error.df, r.rows.f,
                format_p(r.rows.p).c_str());
  return buf;
}

std::string format_t_test(const TTestResult& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "t(%g) = %.3f, %s\n", r.df, r.t, format_p(r.p).c_str());
  return buf;
}

}  // namespace skyloop::eval
