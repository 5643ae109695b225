#include "stivae/io.hpp"

#include "stivae/error.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace stivae::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& cell, const std::string& where) {
  if (cell == "nan" || cell == "NaN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || cell.empty()) throw DataError("not a number '" + cell + "' at " + where);
  return v;
}

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

}  // namespace

bool Table::has(const std::string& name) const {
  for (const auto& c : columns) {
    if (c == name) return true;
  }
  return false;
}

std::size_t Table::index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw DataError("missing column '" + name + "'");
}

std::vector<double> Table::column(const std::string& name) const { return values.column(index(name)); }

Tensor Table::select(const std::vector<std::string>& names) const {
  Tensor out(rows(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::size_t c = index(names[j]);
    for (std::size_t i = 0; i < rows(); ++i) out(i, j) = values(i, c);
  }
  return out;
}

std::vector<std::string> Table::numbered(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c.size() <= prefix.size() || c.compare(0, prefix.size(), prefix) != 0) continue;
    bool digits = true;
    for (std::size_t i = prefix.size(); i < c.size(); ++i) digits = digits && std::isdigit(static_cast<unsigned char>(c[i]));
    if (digits) out.push_back(c);
  }
  return out;
}

Table parse_csv(std::istream& is, const std::string& origin) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) break;
  }
  if (line_no == 0 || trim(line).empty()) throw DataError(origin + ": empty CSV");
  t.columns = split(line, ',');
  std::vector<double> data;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != t.columns.size()) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.columns.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    for (const auto& c : cells) data.push_back(parse_double(c, origin + ":" + std::to_string(line_no)));
    ++n;
  }
  t.values = Tensor({n, t.columns.size()}, std::move(data));
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  return parse_csv(is, path);
}

void write_csv(std::ostream& os, const Table& table) {
  if (table.values.cols() != table.columns.size() && table.rows() > 0) {
    throw DimensionError("CSV header has " + std::to_string(table.columns.size()) + " names for " +
                         std::to_string(table.values.cols()) + " columns");
  }
  os << join(table.columns, ",") << '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      if (j) os << ',';
      os << format_double(table.values(i, j));
    }
    os << '\n';
  }
}

void write_csv(const std::string& path, const Table& table) {
  auto os = open_out(path);
  write_csv(os, table);
}

void write_text_csv(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  auto os = open_out(path);
  os << join(header, ",") << '\n';
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw DimensionError("CSV row width differs from header in " + path);
    os << join(r, ",") << '\n';
  }
}

void KeyValues::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find('=') != std::string::npos || key.find('\n') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw ConfigError("invalid key/value '" + key + "'");
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

bool KeyValues::has(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return true;
  }
  return false;
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ConfigError("missing key '" + key + "'");
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

void write_key_values(const std::string& path, const KeyValues& kv) {
  auto os = open_out(path);
  for (const auto& [k, v] : kv.entries()) os << k << '=' << v << '\n';
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& c : split(text, ',')) out.push_back(parse_double(c, "list '" + text + "'"));
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (const auto& c : split(text, ',')) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
    if (ec != std::errc() || ptr != c.data() + c.size() || c.empty()) {
      throw ConfigError("not an integer '" + c + "' in '" + text + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (int v : parse_int_list(text)) {
    if (v < 0) throw ConfigError("negative size in '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

void write_aux_csv(const std::string& path, const aux::AuxMatrix& aux) {
  write_csv(path, Table{aux.columns, aux.values});
}

aux::AuxMatrix read_aux_csv(const std::string& path) {
  Table t = read_csv(path);
  aux::AuxMatrix m;
  m.columns = std::move(t.columns);
  m.values = std::move(t.values);
  return m;
}

}  // namespace stivae::io
