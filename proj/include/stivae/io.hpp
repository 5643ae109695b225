#pragma once

// Plain-text interchange: numeric CSV tables with a header row and flat
// key=value sidecar files.

#include "stivae/aux.hpp"
#include "stivae/tensor.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stivae::io {

/// Round-trip exact decimal text ("%.17g").
std::string format_double(double v);

struct Table {
  std::vector<std::string> columns;
  Tensor values;  // rows x columns

  std::size_t rows() const { return values.rows(); }
  bool has(const std::string& name) const;
  std::size_t index(const std::string& name) const;  // DataError if absent
  std::vector<double> column(const std::string& name) const;
  /// Columns in the given order.
  Tensor select(const std::vector<std::string>& names) const;
  /// Names starting with `prefix` followed only by digits, in file order.
  std::vector<std::string> numbered(const std::string& prefix) const;
};

Table read_csv(const std::string& path);
Table parse_csv(std::istream& is, const std::string& origin);
void write_csv(const std::string& path, const Table& table);
void write_csv(std::ostream& os, const Table& table);

/// CSV with arbitrary text cells; numbers must be pre-formatted.
void write_text_csv(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

/// Ordered key=value store. Keys are unique; set() overwrites in place.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // ConfigError if absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& kv);

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

void write_aux_csv(const std::string& path, const aux::AuxMatrix& aux);
aux::AuxMatrix read_aux_csv(const std::string& path);

}  // namespace stivae::io
