#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "dbmlab/plots.hpp"

namespace dbm::artifacts {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

// Dense matrix: magic "DBMMAT01", u64 rows, u64 cols, then f64 column-major.
void write_matrix(const fs::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const fs::path& path);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Figure data as CSV with columns series,x,y. The kind (hist, lines, heat) is
// part of the file name: <stem>.<kind>.csv.
void write_figure_csv(const fs::path& path, const std::vector<plots::Series>& series);
std::vector<plots::Series> read_figure_csv(const fs::path& path);
// Renders every figures/*.csv in dir to a sibling .svg; returns the files written.
std::vector<fs::path> render_figures(const fs::path& figures_dir);

}  // namespace dbm::artifacts
