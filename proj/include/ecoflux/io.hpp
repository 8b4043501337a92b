#pragma once

// Tabular export/import and run manifests.
//
// CSV files follow RFC 4180: CRLF line endings, quoting only where needed.
// Numbers are printed in shortest round-trip form (locale independent), so
// a written file re-reads bit identically and repeated runs are byte
// identical. Missing values are empty fields, never a textual NaN. JSON
// exports mirror the tables column-wise with null for missing.

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "model_format.hpp"

namespace ecoflux {

struct Cell {
  enum Kind { empty, number, text };
  Kind kind = empty;
  double num = 0.0;
  std::string str;

  Cell() = default;
  Cell(double v) : kind(number), num(v) {
    if (std::isnan(v)) kind = empty;
  }
  Cell(std::string s) : kind(text), str(std::move(s)) {}
  Cell(const char* s) : kind(text), str(s) {}

  static Cell integer(long long v) {
    Cell c;
    c.kind = number;
    c.num = static_cast<double>(v);
    return c;
  }
};

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  std::vector<Cell>& add_row() {
    rows.emplace_back();
    rows.back().reserve(header.size());
    return rows.back();
  }
};

namespace detail {

inline bool csv_needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

inline void csv_append_field(std::string& out, std::string_view s) {
  if (!csv_needs_quotes(s)) {
    out += s;
    return;
  }
  out += '"';
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

inline std::string cell_to_string(const Cell& c) {
  switch (c.kind) {
    case Cell::number: {
      // Integral values print without an exponent or trailing ".0" so
      // step/index columns stay readable.
      if (c.num == static_cast<long long>(c.num) && std::abs(c.num) < 1e15)
        return std::to_string(static_cast<long long>(c.num));
      return format_double(c.num);
    }
    case Cell::text: return c.str;
    default: return {};
  }
}

}  // namespace detail

inline std::string csv_to_string(const Csv& table) {
  std::string out;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out += ',';
    detail::csv_append_field(out, table.header[c]);
  }
  out += "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      detail::csv_append_field(out, detail::cell_to_string(row[c]));
    }
    out += "\r\n";
  }
  return out;
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

inline void write_csv(const std::filesystem::path& path, const Csv& table) {
  write_file(path, csv_to_string(table));
}

inline nlohmann::json csv_to_json(const Csv& table) {
  nlohmann::json j;
  j["columns"] = table.header;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json jr = nlohmann::json::array();
    for (const Cell& c : row) {
      switch (c.kind) {
        case Cell::number: jr.push_back(c.num); break;
        case Cell::text: jr.push_back(c.str); break;
        default: jr.push_back(nullptr);
      }
    }
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  return j;
}

inline void write_json(const std::filesystem::path& path, const Csv& table) {
  write_file(path, csv_to_json(table).dump(1) + "\n");
}

/// RFC 4180 reader. Quoted fields may contain separators, doubled quotes,
/// and line breaks. Fields that fully parse as a number become number
/// cells; empty fields stay empty.
inline Csv parse_csv(std::string_view src) {
  Csv table;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool row_started = false;

  auto end_field = [&]() {
    fields.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    if (!fields.empty() || row_started) {
      if (table.header.empty()) {
        table.header = fields;
      } else {
        std::vector<Cell> row;
        row.reserve(fields.size());
        for (const std::string& f : fields) {
          if (f.empty()) {
            row.emplace_back();
            continue;
          }
          double v = 0.0;
          auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
          if (ec == std::errc{} && ptr == f.data() + f.size())
            row.emplace_back(v);
          else
            row.emplace_back(f);
        }
        table.rows.push_back(std::move(row));
      }
    }
    fields.clear();
    row_started = false;
  };

  for (std::size_t i = 0; i < src.size(); ++i) {
    char c = src[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < src.size() && src[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; row_started = true; break;
      case ',': end_field(); row_started = true; break;
      case '\r': break;
      case '\n': end_field(); end_row(); break;
      default: field += c; row_started = true;
    }
  }
  if (row_started || !field.empty()) {
    end_field();
    end_row();
  }
  return table;
}

inline Csv read_csv(const std::string& path) {
  return parse_csv(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Checksums and the run manifest.

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [ptr, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, ptr);
  return std::string(16 - s.size(), '0') + s;
}

struct ManifestEntry {
  std::string name;
  std::uint64_t bytes = 0;
  std::uint64_t checksum = 0;
};

/// Deterministic run manifest: sorted file list with sizes and checksums,
/// no timestamps, so identical runs produce identical manifests.
inline void write_manifest(const std::filesystem::path& dir,
                           const std::string& command,
                           std::vector<ManifestEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.name < b.name;
            });
  nlohmann::json j;
  j["command"] = command;
  j["files"] = nlohmann::json::array();
  for (const ManifestEntry& e : entries)
    j["files"].push_back({{"name", e.name},
                          {"bytes", e.bytes},
                          {"fnv1a64", hex64(e.checksum)}});
  write_file(dir / "manifest.json", j.dump(1) + "\n");
}

}  // namespace ecoflux
