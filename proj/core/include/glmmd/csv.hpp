#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "glmmd/model.hpp"

namespace glmmd {

/// Column mapping from a delimited text file onto a Dataset.
struct CsvSchema {
  std::string group_col;
  std::string y_col;
  std::vector<std::string> xa_cols;
  std::vector<std::string> xb_cols;
  bool xa_intercept = false;  // prepend a column of ones to xA
  bool xb_intercept = false;  // prepend a column of ones to xB
  char delimiter = ',';
};

inline constexpr const char* kInterceptName = "(Intercept)";

/// Reads a header-first delimited file and groups rows by `group_col`,
/// keeping groups in order of first appearance and rows in file order.
/// Throws IoError when the file cannot be opened and SchemaError for an
/// empty file, a missing column, a blank or non-numeric cell (the message
/// carries the 1-based line number), or a ragged row.
[[nodiscard]] Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
[[nodiscard]] Dataset parse_csv(std::istream& in, const CsvSchema& schema);

/// Writes `group,y,<xa names>,<xb names>` with shortest round-trip number
/// formatting, so load_csv with the matching schema reproduces the Dataset.
void write_csv(std::ostream& out, const Dataset& ds, char delimiter = ',');

/// Schema that reads back a file produced by write_csv.
[[nodiscard]] CsvSchema schema_for(const Dataset& ds, char delimiter = ',');

/// Shortest decimal text that parses back to exactly `x`.
[[nodiscard]] std::string format_double(double x);

}  // namespace glmmd
