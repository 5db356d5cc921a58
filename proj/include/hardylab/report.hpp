#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hardylab {

// '.'-decimal, locale-free, shortest faithful formatting; reports must be
// byte-identical across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(std::vector<std::string> cells) {
    if (cells.size() != header_.size())
      throw std::logic_error("CsvWriter: row width does not match header");
    rows_.push_back(std::move(cells));
  }

  std::string str() const {
    std::ostringstream os;
    os << join(header_) << "\n";
    for (const auto& r : rows_) os << join(r) << "\n";
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("CsvWriter: cannot open " + path);
    os << str();
  }

  std::size_t size() const { return rows_.size(); }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ",";
      out += cells[i];
    }
    return out;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace hardylab
