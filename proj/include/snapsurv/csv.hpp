#pragma once

// Minimal CSV layer for the dataset interchange files. The schemas used here
// never contain quoted fields, so a plain comma split is sufficient. Doubles
// are written with std::to_chars (shortest representation that parses back to
// the identical bit pattern), which is what makes save/load round-trips and
// rerun byte-identity work.

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace snapsurv::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Reads a whole CSV file. Every row must have as many fields as the header;
// a mismatch aborts naming the 1-based data row.
inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) return t;  // empty file: no header, no rows
  t.header = split_line(line);
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != t.header.size()) {
      throw std::runtime_error(path + ": row " + std::to_string(row_no) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error(where + ": not a number: '" + s + "'");
  }
  return v;
}

inline long long parse_int(const std::string& s, const std::string& where) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error(where + ": not an integer: '" + s + "'");
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  std::ofstream& stream() { return out_; }

 private:
  std::ofstream out_;
};

}  // namespace snapsurv::csv
