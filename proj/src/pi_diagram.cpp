#include "moo/pi_diagram.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace moo {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 600.0;
constexpr double kLeft = 90.0;
constexpr double kRight = 40.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 70.0;
constexpr int kTicks = 5;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Range {
  double lo, hi;
};

Range padded(double lo, double hi) {
  double span = hi - lo;
  if (!(span > 0.0)) span = std::max(std::abs(hi), 1.0) * 0.2;
  const double mid = 0.5 * (lo + hi);
  if (hi - lo <= 0.0) return {mid - 0.5 * span, mid + 0.5 * span};
  return {lo - 0.08 * span, hi + 0.08 * span};
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

void write_pi_points(std::ostream& out, const std::vector<PiPoint>& points, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "model,x_moo,y_criterion,criterion\n";
  for (const auto& p : points)
    out << p.model << ',' << fmt("%.10g", p.x_moo) << ',' << fmt("%.10g", p.y_criterion) << ','
        << p.criterion << '\n';
}

std::string render_pi_svg(const std::vector<PiPoint>& all, const std::string& criterion,
                          const std::string& comment) {
  std::vector<PiPoint> points;
  for (const auto& p : all)
    if (p.criterion == criterion) {
      if (!std::isfinite(p.x_moo) || !std::isfinite(p.y_criterion))
        throw std::invalid_argument("PI point for " + p.model + " is not finite");
      points.push_back(p);
    }
  if (points.empty()) throw std::invalid_argument("no PI points for criterion " + criterion);

  double xmin = points[0].x_moo, xmax = xmin, ymin = points[0].y_criterion, ymax = ymin;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x_moo);
    xmax = std::max(xmax, p.x_moo);
    ymin = std::min(ymin, p.y_criterion);
    ymax = std::max(ymax, p.y_criterion);
  }
  const Range xr = padded(xmin, xmax), yr = padded(ymin, ymax);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 800 600\">\n";
  if (!comment.empty()) s << "<!-- " << escape(comment) << " -->\n";
  s << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
  s << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
    << kTop + ph << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t < kTicks; ++t) {
    const double fx = xr.lo + (xr.hi - xr.lo) * t / (kTicks - 1);
    const double fy = yr.lo + (yr.hi - yr.lo) * t / (kTicks - 1);
    const std::string X = fmt("%.2f", px(fx)), Y = fmt("%.2f", py(fy));
    s << "<line x1=\"" << X << "\" y1=\"" << kTop + ph << "\" x2=\"" << X << "\" y2=\"" << kTop + ph + 6
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << X << "\" y=\"" << kTop + ph + 20 << "\" text-anchor=\"middle\">"
      << fmt("%.3g", fx) << "</text>\n";
    s << "<line x1=\"" << kLeft - 6 << "\" y1=\"" << Y << "\" x2=\"" << kLeft << "\" y2=\"" << Y
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << kLeft - 10 << "\" y=\"" << Y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
      << fmt("%.3g", fy) << "</text>\n";
  }
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 20
    << "\" text-anchor=\"middle\" font-size=\"14\">MOO risk (prediction)</text>\n";
  s << "<text x=\"20\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 "
    << kTop + ph / 2 << ")\">" << escape(upper(criterion)) << " risk (imputation)</text>\n";

  std::map<std::pair<std::string, std::string>, int> stacked;
  for (const auto& p : points) {
    const std::string X = fmt("%.2f", px(p.x_moo)), Y = fmt("%.2f", py(p.y_criterion));
    const int slot = stacked[{X, Y}]++;
    s << "<circle cx=\"" << X << "\" cy=\"" << Y << "\" r=\"5\" fill=\"steelblue\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fmt("%.2f", px(p.x_moo) + 8) << "\" y=\""
      << fmt("%.2f", py(p.y_criterion) - 8 + 14.0 * slot) << "\">" << escape(p.model) << "</text>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> emit_pi_diagram(const std::vector<PiPoint>& points,
                                                   const std::filesystem::path& dir,
                                                   const std::string& comment) {
  std::vector<std::filesystem::path> written;
  std::filesystem::create_directories(dir);
  const auto open = [](const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
  };
  const auto csv = dir / "pi_points.csv";
  {
    auto f = open(csv);
    write_pi_points(f, points, comment);
  }
  written.push_back(csv);
  std::set<std::string> criteria;
  for (const auto& p : points) criteria.insert(p.criterion);
  for (const auto& c : criteria) {
    const auto svg = dir / ("pi_diagram_" + c + ".svg");
    auto f = open(svg);
    f << render_pi_svg(points, c, comment);
    written.push_back(svg);
  }
  return written;
}

}  // namespace moo
