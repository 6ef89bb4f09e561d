#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "assoclab/error.hpp"

namespace assoclab {

// Plain tab-delimited text with a one-line header. Doubles are written with
// "%.17g" so a rewrite of unchanged data is byte-identical.
class TsvWriter {
 public:
  TsvWriter(const std::string& path, const std::vector<std::string>& columns)
      : out_(path), columns_(columns.size()) {
    if (!out_) throw Error(ErrorCode::InputError, "cannot write " + path);
    for (std::size_t i = 0; i < columns.size(); ++i)
      out_ << (i ? "\t" : "") << columns[i];
    out_ << "\n";
  }

  static std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
      throw Error(ErrorCode::InputError, "tsv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "\t" : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

using TsvRow = std::map<std::string, std::string>;

inline std::vector<TsvRow> read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::InputError, "empty tsv: " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) header.push_back(cell);
  }
  std::vector<TsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    TsvRow row;
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, '\t') && i < header.size())
      row[header[i++]] = cell;
    while (i < header.size()) row[header[i++]] = "";
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace assoclab
