#include "dbmlab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dbm::plots {

namespace {

constexpr double kW = 640, kH = 420, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

void header(std::ostringstream& os, const std::string& title) {
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& xl, const std::string& yl) {
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight << "\" height=\""
     << kH - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double x = f.x0 + (f.x1 - f.x0) * k / 4.0, y = f.y0 + (f.y1 - f.y0) * k / 4.0;
    os << "<text x=\"" << f.px(x) << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">" << x
       << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << escape(xl) << "</text>\n";
  os << "<text x=\"14\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 14 " << kH / 2
     << ")\" text-anchor=\"middle\">" << escape(yl) << "</text>\n";
}

void legend(std::ostringstream& os, const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 14 + 16.0 * i;
    os << "<rect x=\"" << kW - kRight - 150 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << kColors[i % 6] << "\"/>\n<text x=\"" << kW - kRight - 135 << "\" y=\"" << y << "\">" << escape(labels[i])
       << "</text>\n";
  }
}

Frame bounds(const std::vector<const Series*>& all) {
  Frame f{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Series* s : all) {
    for (double x : s->x)
      if (std::isfinite(x)) f.x0 = std::min(f.x0, x), f.x1 = std::max(f.x1, x);
    for (double y : s->y)
      if (std::isfinite(y)) f.y0 = std::min(f.y0, y), f.y1 = std::max(f.y1, y);
  }
  if (!std::isfinite(f.x0)) f = {0, 1, 0, 1};
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;
  const double pad = 0.05 * (f.y1 - f.y0);
  f.y0 -= pad;
  f.y1 += pad;
  return f;
}

}  // namespace

std::string histogram_svg(const std::string& title, const std::vector<Series>& samples, int bins) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : samples)
    for (double v : s.x)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi <= lo) hi = lo + 1;
  const double w = (hi - lo) / bins;
  std::vector<std::vector<double>> dens;
  double ymax = 0;
  for (const auto& s : samples) {
    std::vector<double> h(bins, 0.0);
    double n = 0;
    for (double v : s.x) {
      if (!std::isfinite(v)) continue;
      h[std::min(bins - 1, static_cast<int>((v - lo) / w))] += 1;
      n += 1;
    }
    for (double& c : h) c = n > 0 ? c / (n * w) : 0.0, ymax = std::max(ymax, c);
    dens.push_back(std::move(h));
  }
  const Frame f{lo, hi, 0.0, ymax > 0 ? 1.05 * ymax : 1.0};
  std::ostringstream os;
  header(os, title);
  axes(os, f, "value", "density");
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < dens.size(); ++k) {
    os << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (int b = 0; b < bins; ++b) {
      os << f.px(lo + b * w) << ',' << f.py(dens[k][b]) << ' ' << f.px(lo + (b + 1) * w) << ',' << f.py(dens[k][b])
         << ' ';
    }
    os << "\"/>\n";
    labels.push_back(samples[k].label);
  }
  legend(os, labels);
  os << "</svg>\n";
  return os.str();
}

std::string lines_svg(const std::string& title, const std::vector<Series>& lines, const std::string& xlabel,
                      const std::string& ylabel, const Series* band_lo, const Series* band_hi) {
  std::vector<const Series*> all;
  for (const auto& s : lines) all.push_back(&s);
  if (band_lo && band_hi) all.push_back(band_lo), all.push_back(band_hi);
  const Frame f = bounds(all);
  std::ostringstream os;
  header(os, title);
  axes(os, f, xlabel, ylabel);
  if (band_lo && band_hi && band_lo->x.size() == band_hi->x.size()) {
    os << "<polygon fill=\"#cccccc\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < band_lo->x.size(); ++i) os << f.px(band_lo->x[i]) << ',' << f.py(band_lo->y[i]) << ' ';
    for (std::size_t i = band_hi->x.size(); i-- > 0;) os << f.px(band_hi->x[i]) << ',' << f.py(band_hi->y[i]) << ' ';
    os << "\"/>\n";
  }
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    os << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < lines[k].x.size() && i < lines[k].y.size(); ++i)
      if (std::isfinite(lines[k].y[i])) os << f.px(lines[k].x[i]) << ',' << f.py(lines[k].y[i]) << ' ';
    os << "\"/>\n";
    labels.push_back(lines[k].label);
  }
  legend(os, labels);
  os << "</svg>\n";
  return os.str();
}

std::string heatmap_svg(const std::string& title, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  header(os, title);
  const double size = std::min(kW - kLeft - kRight, kH - kTop - kBottom);
  const double cell = m.rows() > 0 ? size / std::max(m.rows(), m.cols()) : size;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double a = std::abs(m.data()[i]);
    if (a > 0) lo = std::min(lo, std::log10(a)), hi = std::max(hi, std::log10(a));
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi <= lo) lo = hi - 1;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double a = std::abs(m(i, j));
      const double u = a > 0 ? (std::log10(a) - lo) / (hi - lo) : 0.0;
      const int g = static_cast<int>(255 * (1.0 - u));
      os << "<rect x=\"" << kLeft + j * cell << "\" y=\"" << kTop + i * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
    }
  }
  os << "<text x=\"" << kLeft + size + 10 << "\" y=\"" << kTop + 12 << "\">log10|B| in [" << lo << ", " << hi
     << "]</text>\n</svg>\n";
  return os.str();
}

}  // namespace dbm::plots
