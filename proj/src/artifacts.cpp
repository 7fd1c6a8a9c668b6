#include "dbmlab/artifacts.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dbmlab/errors.hpp"

namespace dbm::artifacts {

namespace {

constexpr char kMatrixMagic[8] = {'D', 'B', 'M', 'M', 'A', 'T', '0', '1'};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  const std::uint64_t r = static_cast<std::uint64_t>(m.rows()), c = static_cast<std::uint64_t>(m.cols());
  os.write(kMatrixMagic, 8);
  os.write(reinterpret_cast<const char*>(&r), 8);
  os.write(reinterpret_cast<const char*>(&c), 8);
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!os) throw Error("short write to " + path.string());
}

Eigen::MatrixXd read_matrix(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("missing data file " + path.string());
  char magic[8];
  std::uint64_t r = 0, c = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&r), 8);
  is.read(reinterpret_cast<char*>(&c), 8);
  if (!is || std::memcmp(magic, kMatrixMagic, 8) != 0) throw IntegrityError("bad matrix header in " + path.string());
  const auto expected = 24 + r * c * sizeof(double);
  if (fs::file_size(path) != expected) throw IntegrityError("truncated or padded matrix file " + path.string());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is) throw IntegrityError("short read from " + path.string());
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_figure_csv(const fs::path& path, const std::vector<plots::Series>& series) {
  std::ostringstream os;
  os << std::setprecision(17) << "series,x,y\n";
  for (const auto& s : series) {
    if (s.label.find(',') != std::string::npos) throw ValidationError("series", "label may not contain commas");
    for (std::size_t i = 0; i < s.x.size(); ++i) os << s.label << ',' << s.x[i] << ',' << (i < s.y.size() ? s.y[i] : 0.0) << '\n';
  }
  write_text(path, os.str());
}

std::vector<plots::Series> read_figure_csv(const fs::path& path) {
  std::istringstream is(read_text(path));
  std::string line;
  std::getline(is, line);
  if (line != "series,x,y") throw IntegrityError("unexpected figure header in " + path.string());
  std::vector<plots::Series> out;
  std::map<std::string, std::size_t> index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw IntegrityError("malformed figure row in " + path.string());
    const std::string label = line.substr(0, a);
    auto it = index.find(label);
    if (it == index.end()) {
      it = index.emplace(label, out.size()).first;
      out.push_back({label, {}, {}});
    }
    out[it->second].x.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    out[it->second].y.push_back(std::stod(line.substr(b + 1)));
  }
  return out;
}

std::vector<fs::path> render_figures(const fs::path& dir) {
  std::vector<fs::path> csvs, written;
  if (!fs::exists(dir)) return written;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csvs.push_back(e.path());
  std::sort(csvs.begin(), csvs.end());
  for (const auto& p : csvs) {
    const fs::path stem = p.stem();  // <name>.<kind>
    const std::string kind = stem.extension().string();
    const std::string name = stem.stem().string();
    const auto series = read_figure_csv(p);
    std::string svg;
    if (kind == ".hist") {
      svg = plots::histogram_svg(name, series);
    } else if (kind == ".lines") {
      svg = plots::lines_svg(name, series, "x", "y");
    } else if (kind == ".band") {
      // Series named lo and hi form the band; the rest are lines.
      std::vector<plots::Series> lines;
      const plots::Series *lo = nullptr, *hi = nullptr;
      for (const auto& s : series) {
        if (s.label == "lo") lo = &s;
        else if (s.label == "hi") hi = &s;
        else lines.push_back(s);
      }
      svg = plots::lines_svg(name, lines, "t", "value", lo, hi);
    } else if (kind == ".heat") {
      // Each series is a row; x is the column index.
      Eigen::Index cols = 0;
      for (const auto& s : series) cols = std::max<Eigen::Index>(cols, static_cast<Eigen::Index>(s.y.size()));
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(series.size()), cols);
      for (std::size_t r = 0; r < series.size(); ++r)
        for (std::size_t c = 0; c < series[r].y.size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = series[r].y[c];
      svg = plots::heatmap_svg(name, m);
    } else {
      continue;
    }
    fs::path out = p;
    out.replace_extension(".svg");
    write_text(out, svg);
    written.push_back(out);
  }
  return written;
}

}  // namespace dbm::artifacts
