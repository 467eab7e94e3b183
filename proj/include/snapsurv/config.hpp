#pragma once

// Declarative key/value config files for training runs and studies, so every
// experiment is archivable next to its outputs. The format is a small
// TOML-style subset: [section] tables, `key = value` lines, # comments, and
// scalar values (bool, integer, float, quoted string) or flat arrays of them.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snapsurv::config {

struct Value {
  enum class Kind { Bool, Int, Float, String, Array };
  Kind kind = Kind::Int;
  bool b = false;
  long long i = 0;
  double f = 0.0;
  std::string s;
  std::vector<Value> items;

  double as_number() const {
    if (kind == Kind::Int) return static_cast<double>(i);
    if (kind == Kind::Float) return f;
    throw std::runtime_error("config value is not a number");
  }
};

using Section = std::map<std::string, Value>;

struct Document {
  std::map<std::string, Section> sections;  // "" is the root table

  bool has(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    return it != sections.end() && it->second.count(key) > 0;
  }
  const Value& get(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    if (it == sections.end() || !it->second.count(key)) {
      throw std::runtime_error("config: missing key [" + section + "] " + key);
    }
    return it->second.at(key);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline Value parse_scalar(const std::string& tok, int line_no) {
  Value v;
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::Bool;
    v.b = tok == "true";
    return v;
  }
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.kind = Value::Kind::String;
    v.s = tok.substr(1, tok.size() - 2);
    return v;
  }
  bool looks_float = tok.find_first_of(".eE") != std::string::npos;
  try {
    std::size_t used = 0;
    if (looks_float) {
      v.kind = Value::Kind::Float;
      v.f = std::stod(tok, &used);
    } else {
      v.kind = Value::Kind::Int;
      v.i = std::stoll(tok, &used);
    }
    if (used != tok.size()) throw std::invalid_argument(tok);
  } catch (const std::exception&) {
    throw std::runtime_error("config line " + std::to_string(line_no) + ": bad value '" + tok +
                             "'");
  }
  return v;
}

inline Value parse_value(const std::string& text, int line_no) {
  std::string t = trim(text);
  if (t.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty value");
  if (t.front() == '[') {
    if (t.back() != ']') {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": unterminated array");
    }
    Value v;
    v.kind = Value::Kind::Array;
    std::string body = t.substr(1, t.size() - 2);
    std::string cur;
    for (char c : body) {
      if (c == ',') {
        if (!trim(cur).empty()) v.items.push_back(parse_scalar(trim(cur), line_no));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!trim(cur).empty()) v.items.push_back(parse_scalar(trim(cur), line_no));
    return v;
  }
  return parse_scalar(t, line_no);
}

}  // namespace detail

inline Document parse_string(const std::string& text) {
  Document doc;
  doc.sections[""];
  std::string current;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments outside strings
    bool in_str = false;
    std::string stripped;
    for (char c : line) {
      if (c == '"') in_str = !in_str;
      if (c == '#' && !in_str) break;
      stripped.push_back(c);
    }
    stripped = detail::trim(stripped);
    if (stripped.empty()) continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        throw std::runtime_error("config line " + std::to_string(line_no) + ": bad section header");
      }
      current = detail::trim(stripped.substr(1, stripped.size() - 2));
      doc.sections[current];
      continue;
    }
    auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = detail::trim(stripped.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    }
    doc.sections[current][key] = detail::parse_value(stripped.substr(eq + 1), line_no);
  }
  return doc;
}

inline Document parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

inline long long get_int(const Document& d, const std::string& sec, const std::string& key,
                         long long fallback) {
  if (!d.has(sec, key)) return fallback;
  const Value& v = d.get(sec, key);
  if (v.kind != Value::Kind::Int) throw std::runtime_error("config: [" + sec + "] " + key + " must be an integer");
  return v.i;
}

inline double get_double(const Document& d, const std::string& sec, const std::string& key,
                         double fallback) {
  if (!d.has(sec, key)) return fallback;
  return d.get(sec, key).as_number();
}

inline bool get_bool(const Document& d, const std::string& sec, const std::string& key,
                     bool fallback) {
  if (!d.has(sec, key)) return fallback;
  const Value& v = d.get(sec, key);
  if (v.kind != Value::Kind::Bool) throw std::runtime_error("config: [" + sec + "] " + key + " must be a bool");
  return v.b;
}

inline std::string get_string(const Document& d, const std::string& sec, const std::string& key,
                              const std::string& fallback) {
  if (!d.has(sec, key)) return fallback;
  const Value& v = d.get(sec, key);
  if (v.kind != Value::Kind::String) throw std::runtime_error("config: [" + sec + "] " + key + " must be a string");
  return v.s;
}

inline std::vector<double> get_number_array(const Document& d, const std::string& sec,
                                            const std::string& key,
                                            const std::vector<double>& fallback) {
  if (!d.has(sec, key)) return fallback;
  const Value& v = d.get(sec, key);
  if (v.kind != Value::Kind::Array) throw std::runtime_error("config: [" + sec + "] " + key + " must be an array");
  std::vector<double> out;
  for (const auto& item : v.items) out.push_back(item.as_number());
  return out;
}

inline std::vector<long long> get_int_array(const Document& d, const std::string& sec,
                                            const std::string& key,
                                            const std::vector<long long>& fallback) {
  if (!d.has(sec, key)) return fallback;
  const Value& v = d.get(sec, key);
  if (v.kind != Value::Kind::Array) throw std::runtime_error("config: [" + sec + "] " + key + " must be an array");
  std::vector<long long> out;
  for (const auto& item : v.items) {
    if (item.kind != Value::Kind::Int) throw std::runtime_error("config: [" + sec + "] " + key + " must hold integers");
    out.push_back(item.i);
  }
  return out;
}

inline std::vector<std::string> get_string_array(const Document& d, const std::string& sec,
                                                 const std::string& key,
                                                 const std::vector<std::string>& fallback) {
  if (!d.has(sec, key)) return fallback;
  const Value& v = d.get(sec, key);
  if (v.kind != Value::Kind::Array) throw std::runtime_error("config: [" + sec + "] " + key + " must be an array");
  std::vector<std::string> out;
  for (const auto& item : v.items) {
    if (item.kind != Value::Kind::String) throw std::runtime_error("config: [" + sec + "] " + key + " must hold strings");
    out.push_back(item.s);
  }
  return out;
}

}  // namespace snapsurv::config
