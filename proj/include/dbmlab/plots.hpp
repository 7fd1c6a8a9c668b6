#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace dbm::plots {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

// Overlaid normalized histograms of several samples on a common binning.
std::string histogram_svg(const std::string& title, const std::vector<Series>& samples, int bins = 40);

// Polylines; an optional band is drawn as a shaded region y_lo..y_hi.
std::string lines_svg(const std::string& title, const std::vector<Series>& lines, const std::string& xlabel,
                      const std::string& ylabel, const Series* band_lo = nullptr, const Series* band_hi = nullptr);

// Matrix as a grey-scale heat map of log10 |entries|.
std::string heatmap_svg(const std::string& title, const Eigen::MatrixXd& m);

}  // namespace dbm::plots
