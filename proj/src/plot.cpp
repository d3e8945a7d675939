#include "darcygp/plot.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace darcygp::plot {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 20, kBottom = 50;

/// Linear map from data ranges to the plot area.
struct Frame {
  double x0, x1, y0, y1;
  [[nodiscard]] double x(double v) const {
    return kLeft + (x1 > x0 ? (v - x0) / (x1 - x0) : 0.5) * (kWidth - kLeft - kRight);
  }
  [[nodiscard]] double y(double v) const {
    return kHeight - kBottom - (y1 > y0 ? (v - y0) / (y1 - y0) : 0.5) * (kHeight - kTop - kBottom);
  }
};

void begin(std::ostream& out) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void axes(std::ostream& out, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  out << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\""
      << kWidth - kLeft - kRight << "\" height=\"" << kHeight - kTop - kBottom << "\"/></g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << f.x(xv) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
        << std::to_string(xv).substr(0, 7) << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.y(yv) + 4 << "\" text-anchor=\"end\">"
        << std::to_string(yv).substr(0, 7) << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
      << xlabel << "</text>\n";
  out << "<text transform=\"translate(16," << (kTop + kHeight - kBottom) / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

void polyline(std::ostream& out, const Frame& f, std::span<const double> xs, std::span<const double> ys,
              const std::string& color, bool dashed = false) {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
      << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) out << f.x(xs[i]) << ',' << f.y(ys[i]) << ' ';
  out << "\"/>\n";
}

}  // namespace

void curve_svg(std::ostream& out, std::span<const confidence::ConfidenceResult> curve, std::optional<double> target) {
  std::vector<double> r, c;
  for (const auto& p : curve) {
    r.push_back(p.r);
    c.push_back(p.estimate);
  }
  const Frame f{r.empty() ? 0.0 : r.front(), r.empty() ? 1.0 : r.back(), 0.0, 1.0};
  begin(out);
  axes(out, f, "extraction rate r (m^3/s)", "confidence");
  if (target) {
    const double xs[] = {f.x0, f.x1}, ys[] = {*target, *target};
    polyline(out, f, xs, ys, "#c03030", true);
  }
  polyline(out, f, r, c, "#2050a0");
  for (std::size_t i = 0; i < r.size(); ++i)
    out << "<circle cx=\"" << f.x(r[i]) << "\" cy=\"" << f.y(c[i]) << "\" r=\"2.5\" fill=\"#2050a0\"/>\n";
  out << "</svg>\n";
}

void heatmap_svg(std::ostream& out, const confidence::Heatmap& hm) {
  const auto nr = hm.rates.size(), nh = hm.thresholds.size();
  const Frame f{hm.rates.front(), hm.rates.back(), hm.thresholds.front(), hm.thresholds.back()};
  begin(out);
  const double cw = (kWidth - kLeft - kRight) / static_cast<double>(nr);
  const double ch = (kHeight - kTop - kBottom) / static_cast<double>(nh);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nh; ++j) {
      const int g = static_cast<int>(std::lround(255.0 * hm.estimate(static_cast<Eigen::Index>(i),
                                                                     static_cast<Eigen::Index>(j))));
      out << "<rect x=\"" << kLeft + cw * static_cast<double>(i) << "\" y=\""
          << kHeight - kBottom - ch * static_cast<double>(j + 1) << "\" width=\"" << cw + 0.5 << "\" height=\""
          << ch + 0.5 << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
    }
  axes(out, f, "extraction rate r (m^3/s)", "threshold h");
  out << "</svg>\n";
}

void calibration_svg(std::ostream& out, const calibration::CalibrationReport& report) {
  const auto& n = report.norms;
  std::vector<double> xs, ys, xd, yd;
  for (std::size_t j = 0; j < n.delta_s.size(); ++j) {
    xs.push_back(std::log2(n.s[j + 1]));
    ys.push_back(std::log2(n.delta_s[j]));
    xd.push_back(std::log2(n.d[j + 1]));
    yd.push_back(std::log2(n.delta_d[j]));
  }
  std::vector<double> all_x = xs, all_y = ys;
  all_x.insert(all_x.end(), xd.begin(), xd.end());
  all_y.insert(all_y.end(), yd.begin(), yd.end());
  auto finite_minmax = [](const std::vector<double>& v) {
    double lo = INFINITY, hi = -INFINITY;
    for (double x : v)
      if (std::isfinite(x)) lo = std::min(lo, x), hi = std::max(hi, x);
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    return std::pair{lo - 0.5, hi + 0.5};
  };
  const auto [x0, x1] = finite_minmax(all_x);
  const auto [y0, y1] = finite_minmax(all_y);
  const Frame f{x0, x1, y0, y1};
  begin(out);
  axes(out, f, "log2 s (blue), log2 d (orange)", "log2 RMS level difference");
  auto series = [&](const std::vector<double>& x, const std::vector<double>& y, double a, double b,
                    const char* color) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::isfinite(y[i]))
        out << "<circle cx=\"" << f.x(x[i]) << "\" cy=\"" << f.y(y[i]) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    if (!x.empty()) {
      const double lx[] = {x.front(), x.back()}, ly[] = {b + a * x.front(), b + a * x.back()};
      polyline(out, f, lx, ly, color, true);
    }
  };
  series(xs, ys, report.fit.a_s, report.fit.b_s, "#2050a0");
  series(xd, yd, report.fit.a_d, report.fit.b_d, "#d07020");
  out << "</svg>\n";
}

}  // namespace darcygp::plot
