#include "mesofolio/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mesofolio::io {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  // shortest representation that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, x);
    if (std::strtod(probe, nullptr) == x) return probe;
  }
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw std::runtime_error("empty file " + path);
  return table;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& col_labels,
                      const std::vector<std::string>& row_labels, const std::string& corner) {
  if (!col_labels.empty() && static_cast<Eigen::Index>(col_labels.size()) != m.cols())
    throw std::invalid_argument("column label count does not match matrix");
  if (!row_labels.empty() && static_cast<Eigen::Index>(row_labels.size()) != m.rows())
    throw std::invalid_argument("row label count does not match matrix");
  std::ostringstream out;
  if (!col_labels.empty()) {
    if (!row_labels.empty()) out << corner;
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      if (c > 0 || !row_labels.empty()) out << ',';
      out << col_labels[c];
    }
    out << '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!row_labels.empty()) out << row_labels[static_cast<std::size_t>(r)] << ',';
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
  write_text(path, out.str());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace mesofolio::io
