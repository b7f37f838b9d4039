#include "uattr/evaluation/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "uattr/uncertainty/uncertainty.hpp"

namespace uattr::evaluation {

namespace {

constexpr double kZeroEntropy = 1e-12;

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  auto m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

void check_image(const Tensor& x, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || x.size() != width * height) {
    throw diff::ShapeError("image has " + std::to_string(x.size()) + " pixels, expected " + std::to_string(width) +
                           "x" + std::to_string(height));
  }
}

std::vector<double> row_entropies(const Classifier& c, const Tensor& batch) {
  const Tensor p = c.predict_batch(batch);
  std::vector<double> h(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) h[r] = uncertainty::entropy(p.data().subspan(r * p.cols(), p.cols()));
  return h;
}

std::size_t step_size(const CurveConfig& cfg, std::size_t n) {
  if (cfg.granularity > 0) return cfg.granularity;
  return n <= 1024 ? 1 : n / 512;
}

// Images along the transition from `from` to `to`, copying pixels of `to`
// in `order`; row s holds the image after pixels[s] copies.
Tensor transition(const Tensor& from, const Tensor& to, const std::vector<std::size_t>& order,
                  const std::vector<std::size_t>& pixels) {
  const auto n = from.size();
  Tensor batch({pixels.size(), n});
  std::vector<double> cur = from.values();
  std::size_t done = 0;
  for (std::size_t s = 0; s < pixels.size(); ++s) {
    for (; done < pixels[s]; ++done) cur[order[done]] = to[order[done]];
    std::copy(cur.begin(), cur.end(), batch.data().begin() + static_cast<std::ptrdiff_t>(s * n));
  }
  return batch;
}

void check_order(const std::vector<std::size_t>& order, std::size_t n) {
  if (order.size() != n) throw diff::ShapeError("pixel order must list every pixel once");
  std::vector<bool> seen(n, false);
  for (auto i : order) {
    if (i >= n || seen[i]) throw std::invalid_argument("pixel order must be a permutation");
    seen[i] = true;
  }
}

struct Skeleton {
  CurveResult curve;
  Tensor batch;
  Tensor blurred;
};

// Common part of both curves: step grid, composite images and the
// information-content axis (original counts as 1, blurred as 0).
Skeleton skeleton(CurveKind kind, const Tensor& x, const std::vector<std::size_t>& order, const CurveConfig& cfg) {
  check_image(x, cfg.width, cfg.height);
  const auto n = x.size();
  check_order(order, n);
  Skeleton s;
  s.curve.kind = kind;
  s.blurred = blur(x, cfg.width, cfg.height, cfg.blur);
  const auto g = step_size(cfg, n);
  for (std::size_t p = 0;; p = std::min(n, p + g)) {
    s.curve.pixels.push_back(p);
    s.curve.fractions.push_back(static_cast<double>(p) / static_cast<double>(n));
    if (p == n) break;
  }
  s.batch = kind == CurveKind::Eic ? transition(s.blurred, x, order, s.curve.pixels)
                                   : transition(x, s.blurred, order, s.curve.pixels);
  const double ic_x = info_content(x, cfg.width, cfg.height);
  const double ic_b = info_content(s.blurred, cfg.width, cfg.height);
  const double span = ic_x - ic_b;
  for (std::size_t st = 0; st < s.curve.pixels.size(); ++st) {
    if (std::fabs(span) < 1e-12) {
      s.curve.info_content.push_back(s.curve.fractions[st]);
      continue;
    }
    const auto row = s.batch.data().subspan(st * n, n);
    const Tensor img({n}, std::vector<double>(row.begin(), row.end()));
    const double v = (info_content(img, cfg.width, cfg.height) - ic_b) / span;
    s.curve.info_content.push_back(std::clamp(v, 0.0, 1.0));
  }
  return s;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double reduce(const std::vector<double>& v, Aggregate how) { return how == Aggregate::Mean ? mean(v) : median(v); }

std::string number(double v) {
  char buf[64];
  if (v == 0.0) v = 0.0;
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

}  // namespace

std::vector<double> gaussian_kernel(double std) {
  if (!(std > 0.0) || !std::isfinite(std)) throw std::invalid_argument("blur std must be positive");
  const auto radius = static_cast<std::size_t>(std::ceil(4.0 * std));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-d * d / (2.0 * std * std));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

Tensor blur(const Tensor& x, std::size_t width, std::size_t height, const BlurConfig& cfg) {
  check_image(x, width, height);
  const auto k = gaussian_kernel(cfg.std);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  Tensor tmp({x.size()}), out({x.size()});
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
        s += k[static_cast<std::size_t>(d + radius)] * x[r * width + mirror(static_cast<std::ptrdiff_t>(c) + d, width)];
      }
      tmp[r * width + c] = s;
    }
  }
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
        s += k[static_cast<std::size_t>(d + radius)] * tmp[mirror(static_cast<std::ptrdiff_t>(r) + d, height) * width + c];
      }
      out[r * width + c] = s;
    }
  }
  return out;
}

std::vector<double> blurred_entropy_profile(const Classifier& c, const models::Dataset& data,
                                            const std::vector<double>& grid) {
  if (data.size() == 0) throw std::invalid_argument("blur tuning needs at least one image");
  if (grid.empty()) throw std::invalid_argument("blur grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("blur grid must be strictly ascending");
  }
  const auto n = data.pixel_count();
  std::vector<double> profile;
  for (double s : grid) {
    Tensor batch({data.size(), n});
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Tensor b = blur(data.images[i], data.width, data.height, BlurConfig{s});
      std::copy(b.data().begin(), b.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    profile.push_back(mean(row_entropies(c, batch)));
  }
  return profile;
}

double tune_blur_std(const Classifier& c, const models::Dataset& data, const std::vector<double>& grid) {
  const auto profile = blurred_entropy_profile(c, data, grid);
  const double best = *std::max_element(profile.begin(), profile.end());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (profile[i] >= 0.98 * best) return grid[i];
  }
  return grid.back();
}

double info_content(const Tensor& x, std::size_t width, std::size_t height) {
  check_image(x, width, height);
  if (width < 2) return 0.0;
  std::vector<std::uint32_t> codes;
  codes.reserve(height * (width - 1));
  auto level = [](double v) { return static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c + 1 < width; ++c) {
      codes.push_back(level(x[r * width + c]) * 256 + level(x[r * width + c + 1]));
    }
  }
  std::sort(codes.begin(), codes.end());
  const double total = static_cast<double>(codes.size());
  double h = 0.0;
  for (std::size_t i = 0; i < codes.size();) {
    std::size_t j = i;
    while (j < codes.size() && codes[j] == codes[i]) ++j;
    const double p = static_cast<double>(j - i) / total;
    h -= p * std::log(p);
    i = j;
  }
  return std::max(h, 0.0);
}

std::vector<std::size_t> attribution_order(const Tensor& attr, bool descending) {
  std::vector<std::size_t> idx(attr.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? attr[a] > attr[b] : attr[a] < attr[b];
  });
  return idx;
}

CurveResult eic_ordered(const Classifier& c, const Tensor& x, const std::vector<std::size_t>& order,
                        const CurveConfig& cfg) {
  auto s = skeleton(CurveKind::Eic, x, order, cfg);
  const auto h = row_entropies(c, s.batch);
  const double h_blur = h.front();
  s.curve.excluded = h_blur <= kZeroEntropy;
  for (double v : h) s.curve.values.push_back(s.curve.excluded ? 0.0 : v / h_blur);
  if (!s.curve.excluded) s.curve.values.front() = 1.0;
  return s.curve;
}

CurveResult urc_ordered(const Classifier& c, const Tensor& x, const std::vector<std::size_t>& order,
                        const CurveConfig& cfg) {
  auto s = skeleton(CurveKind::Urc, x, order, cfg);
  const auto h = row_entropies(c, s.batch);
  const double h_x = h.front();
  s.curve.excluded = h_x <= kZeroEntropy;
  double best = 0.0;
  for (double v : h) {
    if (!s.curve.excluded) best = std::max(best, 1.0 - v / h_x);
    s.curve.values.push_back(best);
  }
  return s.curve;
}

CurveResult eic(const Classifier& c, const Tensor& x, const Tensor& attr, const CurveConfig& cfg) {
  if (attr.size() != x.size()) throw diff::ShapeError("attribution map size does not match the image");
  return eic_ordered(c, x, attribution_order(attr, false), cfg);
}

CurveResult urc(const Classifier& c, const Tensor& x, const Tensor& attr, const CurveConfig& cfg) {
  if (attr.size() != x.size()) throw diff::ShapeError("attribution map size does not match the image");
  return urc_ordered(c, x, attribution_order(attr, true), cfg);
}

double area_over_curve(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("curve needs at least two matching points");
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ux, uy;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double s = 0.0;
    while (j < idx.size() && xs[idx[j]] == xs[idx[i]]) s += ys[idx[j++]];
    ux.push_back(xs[idx[i]]);
    uy.push_back(s / static_cast<double>(j - i));
    i = j;
  }
  double area = 0.0;
  for (std::size_t i = 1; i < ux.size(); ++i) area += 0.5 * (ux[i] - ux[i - 1]) * (uy[i] + uy[i - 1]);
  return 1.0 - area;
}

double area_over_eic(const CurveResult& curve) {
  if (curve.kind != CurveKind::Eic) throw std::invalid_argument("area over EIC needs an EIC curve");
  return area_over_curve(curve.info_content, curve.values);
}

double urc_at(const CurveResult& curve, double fraction) {
  if (curve.pixels.empty()) throw std::invalid_argument("empty curve");
  const std::size_t n = curve.pixels.back();
  const auto need = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  for (std::size_t s = 0; s < curve.steps(); ++s) {
    if (curve.pixels[s] >= need) return curve.values[s];
  }
  return curve.values.back();
}

CurveResult aggregate_curves(const std::vector<CurveResult>& curves, Aggregate how) {
  std::vector<const CurveResult*> kept;
  for (const auto& c : curves) {
    if (!c.excluded) kept.push_back(&c);
  }
  if (kept.empty()) throw std::invalid_argument("no curves left to aggregate");
  CurveResult out;
  out.kind = kept.front()->kind;
  out.pixels = kept.front()->pixels;
  out.fractions = kept.front()->fractions;
  for (const auto* c : kept) {
    if (c->pixels != out.pixels) throw std::invalid_argument("curves have different step grids");
  }
  for (std::size_t s = 0; s < out.pixels.size(); ++s) {
    std::vector<double> vals, info;
    for (const auto* c : kept) {
      vals.push_back(c->values[s]);
      info.push_back(c->info_content[s]);
    }
    out.values.push_back(reduce(vals, how));
    out.info_content.push_back(reduce(info, how));
  }
  return out;
}

EvaluationSummary summarize(const std::vector<CurveResult>& eics, const std::vector<CurveResult>& urcs,
                            Aggregate how) {
  if (eics.size() != urcs.size()) throw std::invalid_argument("EIC and URC lists differ in length");
  EvaluationSummary s;
  s.image_count = eics.size();
  std::vector<double> area, u1, u5;
  for (std::size_t i = 0; i < eics.size(); ++i) {
    if (eics[i].excluded || urcs[i].excluded) {
      ++s.excluded_count;
      continue;
    }
    area.push_back(area_over_eic(eics[i]));
    u1.push_back(urc_at(urcs[i], 0.01));
    u5.push_back(urc_at(urcs[i], 0.05));
  }
  s.area_over_eic = reduce(area, how);
  s.urc_at_1pct = reduce(u1, how);
  s.urc_at_5pct = reduce(u5, how);
  return s;
}

void write_curve_csv(std::ostream& out, const CurveResult& curve) {
  out << "step,fraction,info_content,value\n";
  for (std::size_t s = 0; s < curve.steps(); ++s) {
    out << s << ',' << number(curve.fractions[s]) << ',' << number(curve.info_content[s]) << ','
        << number(curve.values[s]) << '\n';
  }
}

void write_summary(std::ostream& out, const EvaluationSummary& s) {
  out << "area_over_eic=" << number(s.area_over_eic) << '\n'
      << "urc_at_1pct=" << number(s.urc_at_1pct) << '\n'
      << "urc_at_5pct=" << number(s.urc_at_5pct) << '\n'
      << "excluded_count=" << s.excluded_count << '\n'
      << "image_count=" << s.image_count << '\n';
}

}  // namespace uattr::evaluation
