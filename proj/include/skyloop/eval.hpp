#pragma once

#include <string>
#include <vector>

#include "skyloop/trajectory.hpp"

// Trajectory accuracy metrics, success tables and the significance tests
// used to compare simulated and real flights.
namespace skyloop::eval {

using traj::IndexPairs;
using traj::Trajectory;

enum class Unit { Meters, Radians };

struct ErrorSeries {
  Unit unit = Unit::Meters;
  std::vector<double> timestamps;  // reference timestamps
  std::vector<double> values;
};

/// Same contract as traj::associate.
IndexPairs associate(const Trajectory& est, const Trajectory& ref, double max_dt);

/// Per-pair Euclidean position error.
ErrorSeries translation_error(const Trajectory& est_aligned, const Trajectory& ref, const IndexPairs& pairs);
/// Per-pair norm of the Tait-Bryan difference, each component wrapped to (-pi, pi].
ErrorSeries rotation_error(const Trajectory& est_aligned, const Trajectory& ref, const IndexPairs& pairs);

struct Summary {
  double mean = 0.0;
  double max = 0.0;
  double rmse = 0.0;

  friend bool operator==(const Summary&, const Summary&) = default;
};

/// Throws EmptySeries.
Summary summarize(const ErrorSeries& series);

enum class AlignMode { Similarity, Rigid, None };

std::string_view to_string(AlignMode mode);
/// Accepts sim3 / se3 / none as well as similarity / rigid.
AlignMode parse_align_mode(std::string_view s);

struct MetricsReport {
  Summary translation;  // m
  Summary rotation;     // rad
  std::size_t samples = 0;
  AlignMode alignment = AlignMode::None;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Associates within half the reference's median period, aligns per mode,
/// then summarizes both error series. `aligned`, when given, receives the
/// aligned estimate.
MetricsReport evaluate(const Trajectory& est, const Trajectory& ref, AlignMode mode,
                       Trajectory* aligned = nullptr);

std::string report_to_json(const MetricsReport& report);
/// Throws ParseError.
MetricsReport report_from_json(const std::string& text);
/// Aligned text table with rows "Mean Error", "Max Error", "RMSE".
std::string format_report_table(const MetricsReport& report);
/// Writes `path` (JSON) and the text table next to it with a .txt extension.
void emit_report(const MetricsReport& report, const std::string& path);

struct PlotSeries {
  std::string label;
  std::vector<traj::Vec3> positions;
  bool reference = false;
};

/// Top-down (x, y) SVG overlay; reference paths solid, estimates dashed.
std::string trajectory_plot_svg(const std::vector<PlotSeries>& series);
void emit_trajectory_plot(const std::vector<PlotSeries>& series, const std::string& path);

/// Success rates: one row per maneuver, one column per environment.
struct SuccessTable {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<double>> values;

  /// Throws InvalidArgument unless rectangular with entries in [0, 1].
  void validate() const;
};

/// Header row "maneuver,<env>,...", then "<maneuver>,<rate>,...".
SuccessTable read_success_table(const std::string& path);
void write_success_table(const std::string& path, const SuccessTable& table);

struct FactorStats {
  double ss = 0.0;
  double df = 0.0;
  double ms = 0.0;
  double f = 0.0;
  double p = 1.0;
};

struct ErrorStats {
  double ss = 0.0;
  double df = 0.0;
  double ms = 0.0;
};

struct AnovaResult {
  FactorStats rows;  // maneuver
  FactorStats cols;  // environment
  ErrorStats error;  // interaction term
  double ss_total = 0.0;
};

/// Throws DegenerateTable for a dimension below 2, ZeroErrorVariance when the
/// error mean square is zero.
AnovaResult anova_two_way_no_rep(const SuccessTable& table);
AnovaResult anova_two_way_no_rep(const std::vector<std::vector<double>>& values);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Throws InvalidArgument for unequal lengths or n < 2, ZeroVariance when
/// every difference is equal.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Upper tail P(F > f) for F(d1, d2).
double f_sf(double f, double d1, double d2);
/// Two-sided P(|T| > |t|) for Student t with df degrees of freedom.
double t_two_sided_p(double t, double df);

/// Formats as F(d1, d2) = x, p = y.
std::string format_anova(const AnovaResult& r);
std::string format_t_test(const TTestResult& r);

}  // namespace skyloop::eval
