#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lqmkv/errors.hpp"

namespace lqmkv {

// CSV writer printing floats with 17 significant digits, enough to
// round-trip doubles and keep repeated runs byte-identical.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) fail(ErrorKind::ParseError, "cannot write " + path);
  }

  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out_ << ',';
      out_ << cols[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& vals) {
    char buf[40];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) out_ << ',';
      std::snprintf(buf, sizeof buf, "%.17g", vals[i]);
      out_ << buf;
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace lqmkv
