#include "glmmd/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "glmmd/error.hpp"

namespace glmmd {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one record; double quotes group a field and "" is a literal quote.
std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  throw SchemaError("column '" + name + "' not found in header");
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& col) {
  if (cell.empty()) {
    throw SchemaError("line " + std::to_string(line_no) + ", column '" + col + "': blank cell");
  }
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw SchemaError("line " + std::to_string(line_no) + ", column '" + col + "': '" + cell +
                      "' is not numeric");
  }
  return value;
}

struct GroupRows {
  std::string id;
  std::vector<double> y;
  std::vector<std::vector<double>> xa;
  std::vector<std::vector<double>> xb;
};

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, int cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return m;
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_record(line, schema.delimiter);
      break;
    }
  }
  if (header.empty()) throw SchemaError("empty file: no header row");

  const std::size_t group_idx = column_index(header, schema.group_col);
  const std::size_t y_idx = column_index(header, schema.y_col);
  std::vector<std::size_t> xa_idx;
  std::vector<std::size_t> xb_idx;
  for (const auto& c : schema.xa_cols) xa_idx.push_back(column_index(header, c));
  for (const auto& c : schema.xb_cols) xb_idx.push_back(column_index(header, c));

  std::vector<std::string> xa_names;
  std::vector<std::string> xb_names;
  if (schema.xa_intercept) xa_names.emplace_back(kInterceptName);
  xa_names.insert(xa_names.end(), schema.xa_cols.begin(), schema.xa_cols.end());
  if (schema.xb_intercept) xb_names.emplace_back(kInterceptName);
  xb_names.insert(xb_names.end(), schema.xb_cols.begin(), schema.xb_cols.end());
  const int da = static_cast<int>(xa_names.size());
  const int db = static_cast<int>(xb_names.size());

  std::vector<GroupRows> rows;
  std::unordered_map<std::string, std::size_t> lookup;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    const std::string& gid = fields[group_idx];
    if (gid.empty()) {
      throw SchemaError("line " + std::to_string(line_no) + ", column '" + schema.group_col +
                        "': blank cell");
    }
    auto [it, inserted] = lookup.try_emplace(gid, rows.size());
    if (inserted) rows.push_back(GroupRows{gid, {}, {}, {}});
    GroupRows& g = rows[it->second];
    g.y.push_back(parse_number(fields[y_idx], line_no, schema.y_col));
    std::vector<double> xa;
    std::vector<double> xb;
    if (schema.xa_intercept) xa.push_back(1.0);
    for (std::size_t k = 0; k < xa_idx.size(); ++k)
      xa.push_back(parse_number(fields[xa_idx[k]], line_no, schema.xa_cols[k]));
    if (schema.xb_intercept) xb.push_back(1.0);
    for (std::size_t k = 0; k < xb_idx.size(); ++k)
      xb.push_back(parse_number(fields[xb_idx[k]], line_no, schema.xb_cols[k]));
    g.xa.push_back(std::move(xa));
    g.xb.push_back(std::move(xb));
    ++data_rows;
  }
  if (data_rows == 0) throw SchemaError("no data rows after the header");

  std::vector<Group> groups;
  groups.reserve(rows.size());
  for (auto& r : rows) {
    Group g;
    g.id = r.id;
    g.y = Eigen::Map<const Eigen::VectorXd>(r.y.data(), static_cast<Eigen::Index>(r.y.size()));
    g.xa = to_matrix(r.xa, da);
    g.xb = to_matrix(r.xb, db);
    groups.push_back(std::move(g));
  }
  return Dataset(std::move(groups), std::move(xa_names), std::move(xb_names));
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return parse_csv(in, schema);
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const Dataset& ds, char delimiter) {
  out << "group" << delimiter << "y";
  for (const auto& n : ds.xa_names()) out << delimiter << n;
  for (const auto& n : ds.xb_names()) out << delimiter << n;
  out << '\n';
  for (const Group& g : ds.groups()) {
    for (int j = 0; j < g.size(); ++j) {
      out << g.id << delimiter << format_double(g.y(j));
      for (Eigen::Index k = 0; k < g.xa.cols(); ++k) out << delimiter << format_double(g.xa(j, k));
      for (Eigen::Index k = 0; k < g.xb.cols(); ++k) out << delimiter << format_double(g.xb(j, k));
      out << '\n';
    }
  }
}

CsvSchema schema_for(const Dataset& ds, char delimiter) {
  CsvSchema s;
  s.group_col = "group";
  s.y_col = "y";
  s.xa_cols = ds.xa_names();
  s.xb_cols = ds.xb_names();
  s.delimiter = delimiter;
  return s;
}

}  // namespace glmmd
