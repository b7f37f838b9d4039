#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "uattr/models/classifier.hpp"
#include "uattr/models/dataset.hpp"

namespace uattr::evaluation {

using diff::Tensor;
using models::Classifier;

/// Separable Gaussian blur, kernel radius ceil(4 std), mirrored borders
/// (x[-1] = x[0]).
struct BlurConfig {
  double std = 1.0;
};

std::vector<double> gaussian_kernel(double std);
Tensor blur(const Tensor& x, std::size_t width, std::size_t height, const BlurConfig& cfg);

/// Smallest std in the ascending `grid` whose mean fully-blurred entropy is
/// at least 98% of the largest mean over the grid.
double tune_blur_std(const Classifier& c, const models::Dataset& data, const std::vector<double>& grid);
/// Mean deterministic entropy of the blurred images, one entry per grid std.
std::vector<double> blurred_entropy_profile(const Classifier& c, const models::Dataset& data,
                                            const std::vector<double>& grid);

/// Second-order Shannon entropy (nats) of horizontally adjacent pixel
/// pairs after quantizing to 256 levels.
double info_content(const Tensor& x, std::size_t width, std::size_t height);

struct CurveConfig {
  std::size_t width = 0;
  std::size_t height = 0;
  BlurConfig blur{};
  /// Pixels per step; 0 picks 1 for images up to 1024 pixels, else n/512.
  std::size_t granularity = 0;
};

enum class CurveKind : std::uint8_t { Eic, Urc };

struct CurveResult {
  CurveKind kind = CurveKind::Eic;
  std::vector<std::size_t> pixels;    // pixels revealed or removed after each step
  std::vector<double> fractions;      // pixels / n
  std::vector<double> info_content;   // normalized between blurred (0) and original (1)
  std::vector<double> values;
  bool excluded = false;              // zero reference entropy

  std::size_t steps() const { return values.size(); }
};

/// Pixel indices sorted by attribution, ties broken by index.
std::vector<std::size_t> attribution_order(const Tensor& attr, bool descending);

/// Reveals pixels of x into its blurred copy, most negative attribution first.
CurveResult eic(const Classifier& c, const Tensor& x, const Tensor& attr, const CurveConfig& cfg);
CurveResult eic_ordered(const Classifier& c, const Tensor& x, const std::vector<std::size_t>& order,
                        const CurveConfig& cfg);
/// Replaces pixels of x by blurred ones, most positive attribution first,
/// keeping the running best fractional entropy reduction.
CurveResult urc(const Classifier& c, const Tensor& x, const Tensor& attr, const CurveConfig& cfg);
CurveResult urc_ordered(const Classifier& c, const Tensor& x, const std::vector<std::size_t>& order,
                        const CurveConfig& cfg);

/// 1 - trapezoid area under (xs, ys) after sorting by xs and averaging ys
/// over equal xs.
double area_over_curve(std::vector<double> xs, std::vector<double> ys);
/// Against the normalized information content, or the revealed fraction
/// when the image carries no more content than its blurred copy.
double area_over_eic(const CurveResult& curve);
/// Curve value once at least ceil(fraction * n) pixels are removed.
double urc_at(const CurveResult& curve, double fraction);

enum class Aggregate : std::uint8_t { Mean, Median };

/// Per-step mean or median over the non-excluded curves.
CurveResult aggregate_curves(const std::vector<CurveResult>& curves, Aggregate how);

struct EvaluationSummary {
  double area_over_eic = 0.0;
  double urc_at_1pct = 0.0;
  double urc_at_5pct = 0.0;
  std::size_t excluded_count = 0;
  std::size_t image_count = 0;
};

/// Per-image metrics, then mean or median across images. An image counts
/// as excluded if either of its curves is.
EvaluationSummary summarize(const std::vector<CurveResult>& eics, const std::vector<CurveResult>& urcs,
                            Aggregate how = Aggregate::Mean);

void write_curve_csv(std::ostream& out, const CurveResult& curve);
void write_summary(std::ostream& out, const EvaluationSummary& s);

}  // namespace uattr::evaluation
