#pragma once

#include <string>
#include <vector>

#include "ldpnn/types.hpp"

namespace ldpnn {

// Shortest-roundtrip decimal rendering (%.17g); infinities spelled out so
// CSV output is byte-stable.
std::string fmt_double(double v);

// Row-major semicolon-joined matrix entries for single CSV cells.
std::string fmt_matrix(const Matrix& m);

// In-memory CSV: nothing touches the filesystem until write() succeeds.
class CsvReport {
 public:
  explicit CsvReport(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  const std::string& text() const { return buf_; }
  void write(const std::string& path) const;

 private:
  size_t cols_;
  std::string buf_;
};

}  // namespace ldpnn
