#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mte/sample.hpp"

namespace mte {

/// File could not be read or its contents could not be turned into a Sample.
class CsvError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ColumnMap {
  std::string y;
  std::string d;
  std::vector<std::string> x;
};

/// Splits one RFC-4180 record (quoted fields, doubled quotes) into cells.
std::vector<std::string> split_csv_record(const std::string& line);

/// Reads a header-first CSV. Treatment cells accept 0/1/true/false (any case).
Sample load_csv(const std::string& path, const ColumnMap& columns);

/// Writes y,d,x1..xd with round-trip precision.
void save_csv(const std::string& path, const Sample& sample, const ColumnMap& columns);

}  // namespace mte
