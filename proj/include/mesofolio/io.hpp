#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace mesofolio::io {

/// Shortest exact decimal form of a double ("%.17g" trimmed); parses back to
/// the same bits.
std::string format_double(double x);

std::vector<std::string> split_csv_line(const std::string& line);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

/// Dense matrix with a header of column labels and an optional leading label
/// column.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& col_labels,
                      const std::vector<std::string>& row_labels = {},
                      const std::string& corner = "");

void write_text(const std::string& path, const std::string& content);

/// FNV-1a 64-bit, used to fingerprint resolved configs.
std::uint64_t fnv1a64(const std::string& s);
std::string to_hex(std::uint64_t v);

}  // namespace mesofolio::io
