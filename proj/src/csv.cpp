#include "mte/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace mte {

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw CsvError("unterminated quoted field");
  cells.push_back(std::move(cur));
  return cells;
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string where(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  const std::string s = trim(cell);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw CsvError("unparseable number '" + cell + "' at " + where(row, column));
  if (!std::isfinite(v)) throw CsvError("non-finite value '" + cell + "' at " + where(row, column));
  return v;
}

int parse_treatment(const std::string& cell, std::size_t row, const std::string& column) {
  const std::string s = lower(trim(cell));
  if (s == "1" || s == "true") return 1;
  if (s == "0" || s == "false") return 0;
  throw CsvError("treatment must be 0/1/true/false, got '" + cell + "' at " + where(row, column));
}

}  // namespace

Sample load_csv(const std::string& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw CsvError("'" + path + "' is empty; a header row is required");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  auto header = split_csv_record(line);
  for (auto& h : header) h = trim(h);

  auto index_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CsvError("missing column '" + name + "' in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t yi = index_of(columns.y);
  const std::size_t di = index_of(columns.d);
  std::vector<std::size_t> xi;
  for (const auto& name : columns.x) xi.push_back(index_of(name));

  std::vector<double> y, x;
  std::vector<int> d;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_record(line);
    if (cells.size() != header.size())
      throw CsvError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                     " cells, header has " + std::to_string(header.size()));
    y.push_back(parse_number(cells[yi], row, columns.y));
    d.push_back(parse_treatment(cells[di], row, columns.d));
    for (std::size_t k = 0; k < xi.size(); ++k)
      x.push_back(parse_number(cells[xi[k]], row, columns.x[k]));
  }
  if (y.empty()) throw CsvError("'" + path + "' has no data rows");
  return Sample(std::move(y), std::move(d), std::move(x), xi.size());
}

void save_csv(const std::string& path, const Sample& sample, const ColumnMap& columns) {
  if (columns.x.size() != sample.dim())
    throw std::invalid_argument("column map does not match the covariate dimension");
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write '" + path + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << columns.y << ',' << columns.d;
  for (const auto& name : columns.x) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < sample.size(); ++i) {
    out << sample.y(i) << ',' << sample.d(i);
    for (double v : sample.x(i)) out << ',' << v;
    out << '\n';
  }
  if (!out) throw CsvError("failed writing '" + path + "'");
}

}  // namespace mte
