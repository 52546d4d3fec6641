#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntkd/errors.hpp"
#include "ntkd/kernels.hpp"

namespace ntkd {

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_gram_csv(const GramMatrix& g, std::ostream& out) {
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.n; ++j) {
      if (j) out << ',';
      out << format_g17(g.entries(i, j));
    }
    out << '\n';
  }
}

inline GramMatrix read_gram_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  GramMatrix g;
  g.n = int(rows.size());
  g.entries.resize(g.n, g.n);
  for (int i = 0; i < g.n; ++i) {
    if (int(rows[size_t(i)].size()) != g.n)
      throw format_error("gram csv: row " + std::to_string(i) + " has " +
                         std::to_string(rows[size_t(i)].size()) + " cells, expected " +
                         std::to_string(g.n));
    for (int j = 0; j < g.n; ++j) g.entries(i, j) = rows[size_t(i)][size_t(j)];
  }
  return g;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot write file: " + path.string());
  out << body;
}

}  // namespace ntkd
