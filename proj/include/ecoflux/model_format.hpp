#pragma once

// Plain-text model format, line oriented:
//
//   # comment (to end of line)
//   [model]
//   n = 2
//   names = plants herbivores      # optional, defaults to 1..n
//   self_flows = false             # optional
//   [params]                       # optional, name = number
//   a1 = 1.0
//   [inputs]                       # expressions, keyed by index or name
//   1 = 3 + sin(t)
//   [flows]                        # i<-j = intensity expression
//   2<-1 = 4/3
//   [outputs]
//   1 = 1/3
//   [initial]
//   1 = 3
//   [simulate]                     # optional defaults for the CLI
//   t0 = 0
//   t1 = 10
//   samples = 1001
//
// Required sections: model, inputs, flows, outputs, initial. Entries
// omitted within a section default to zero. Duplicate keys and duplicate
// sections are rejected. parse_model validates the result and promotes
// error diagnostics to a ModelError.

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"

namespace ecoflux {

/// Validation failure raised by parse_model; carries the diagnostics.
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(std::vector<Diagnostic> ds)
      : std::runtime_error(format_diagnostics(ds)), diagnostics_(std::move(ds)) {}
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] inline void format_fail(const std::string& reason, int line) {
  throw ParseError(reason, SourcePos{line, 1});
}

inline double parse_number_field(std::string_view value, int line,
                                 const std::string& key) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    format_fail("invalid number for '" + key + "'", line);
  return v;
}

inline int parse_int_field(std::string_view value, int line,
                           const std::string& key) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    format_fail("invalid integer for '" + key + "'", line);
  return v;
}

inline bool parse_bool_field(std::string_view value, int line,
                             const std::string& key) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  format_fail("invalid boolean for '" + key + "'", line);
}

inline Expr parse_expr_field(std::string_view value, int line) {
  try {
    return Expr::parse(value);
  } catch (const ParseError& e) {
    // Re-base the column onto the file line (values are single-line).
    throw ParseError(e.reason(), SourcePos{line, e.where().col});
  }
}

}  // namespace detail

inline CompartmentalModel parse_model(std::string_view src) {
  using detail::format_fail;
  CompartmentalModel m;
  std::set<std::string> seen_sections;
  std::set<std::string> seen_keys;  // "<section>\n<key>"
  std::string section;
  bool model_resized = false;
  int line_no = 0;

  auto need_model = [&](int line) {
    if (!model_resized)
      format_fail("'n' must be declared in [model] before this entry", line);
  };
  auto compartment = [&](std::string_view key, int line) {
    need_model(line);
    int idx = m.compartment_index(key);
    if (idx < 0)
      format_fail("unknown compartment '" + std::string(key) + "'", line);
    return idx;
  };

  std::string_view rest = src;
  while (!rest.empty() || line_no == 0) {
    std::size_t nl = rest.find('\n');
    std::string_view raw =
        nl == std::string_view::npos ? rest : rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{}
                                        : rest.substr(nl + 1);
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string_view::npos) raw = raw.substr(0, hash);
    std::string_view s = detail::trim(raw);
    if (s.empty()) {
      if (rest.empty()) break;
      continue;
    }

    if (s.front() == '[') {
      if (s.back() != ']') format_fail("unterminated section header", line_no);
      section = std::string(detail::trim(s.substr(1, s.size() - 2)));
      static const std::set<std::string> known = {
          "model", "params", "inputs", "flows", "outputs", "initial",
          "simulate"};
      if (!known.count(section))
        format_fail("unknown section [" + section + "]", line_no);
      if (!seen_sections.insert(section).second)
        format_fail("duplicate section [" + section + "]", line_no);
      if (section != "model" && !seen_sections.count("model"))
        format_fail("[model] must come first", line_no);
      continue;
    }

    std::size_t eq = s.find('=');
    if (eq == std::string_view::npos)
      format_fail("expected 'key = value'", line_no);
    std::string key(detail::trim(s.substr(0, eq)));
    std::string_view value = detail::trim(s.substr(eq + 1));
    if (key.empty()) format_fail("empty key", line_no);
    if (value.empty()) format_fail("empty value for '" + key + "'", line_no);
    if (section.empty())
      format_fail("entry outside of any section", line_no);
    if (!seen_keys.insert(section + "\n" + key).second)
      format_fail("duplicate key '" + key + "' in [" + section + "]", line_no);

    if (section == "model") {
      if (key == "n") {
        int n = detail::parse_int_field(value, line_no, key);
        if (n < 1) format_fail("n must be at least 1", line_no);
        m.resize(n);
        model_resized = true;
      } else if (key == "names") {
        need_model(line_no);
        std::vector<std::string> names;
        std::istringstream ss{std::string(value)};
        std::string word;
        while (ss >> word) names.push_back(word);
        if (static_cast<int>(names.size()) != m.n)
          format_fail("expected " + std::to_string(m.n) + " names", line_no);
        m.names = std::move(names);
      } else if (key == "self_flows") {
        m.allow_self_flows = detail::parse_bool_field(value, line_no, key);
      } else {
        format_fail("unknown [model] key '" + key + "'", line_no);
      }
    } else if (section == "params") {
      if (m.param_index(key) >= 0)
        format_fail("duplicate parameter '" + key + "'", line_no);
      m.set_param(key, detail::parse_number_field(value, line_no, key));
    } else if (section == "inputs") {
      int i = compartment(key, line_no);
      m.input(i) = detail::parse_expr_field(value, line_no);
    } else if (section == "outputs") {
      int i = compartment(key, line_no);
      m.output_intensity(i) = detail::parse_expr_field(value, line_no);
    } else if (section == "initial") {
      int i = compartment(key, line_no);
      m.x0(i) = detail::parse_number_field(value, line_no, key);
    } else if (section == "flows") {
      std::size_t arrow = key.find("<-");
      if (arrow == std::string::npos)
        format_fail("flow keys look like 'i<-j'", line_no);
      int i = compartment(detail::trim(std::string_view(key).substr(0, arrow)),
                          line_no);
      int j = compartment(
          detail::trim(std::string_view(key).substr(arrow + 2)), line_no);
      m.intensity(i, j) = detail::parse_expr_field(value, line_no);
    } else {  // simulate
      SimulateDefaults& d = m.defaults;
      if (key == "t0") {
        d.t0 = detail::parse_number_field(value, line_no, key);
        d.has_span = true;
      } else if (key == "t1") {
        d.t1 = detail::parse_number_field(value, line_no, key);
        d.has_span = true;
      } else if (key == "samples") {
        d.samples = detail::parse_int_field(value, line_no, key);
      } else if (key == "rtol") {
        d.rtol = detail::parse_number_field(value, line_no, key);
      } else if (key == "atol") {
        d.atol = detail::parse_number_field(value, line_no, key);
      } else if (key == "max_step") {
        d.max_step = detail::parse_number_field(value, line_no, key);
      } else {
        format_fail("unknown [simulate] key '" + key + "'", line_no);
      }
    }
    if (rest.empty()) break;
  }

  for (const char* required : {"model", "inputs", "flows", "outputs",
                               "initial"})
    if (!seen_sections.count(required))
      format_fail(std::string("missing required section [") + required + "]",
                  line_no);

  std::vector<Diagnostic> ds = validate_model(m);
  if (has_errors(ds)) throw ModelError(std::move(ds));
  return m;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read '" + path + "'");
  return ss.str();
}

inline CompartmentalModel parse_model_file(const std::string& path) {
  return parse_model(read_text_file(path));
}

/// Canonical text form. parse_model(serialize_model(m)) reproduces the
/// model exactly: same structure, same expression programs.
inline std::string serialize_model(const CompartmentalModel& m) {
  std::string out;
  out += "[model]\nn = " + std::to_string(m.n) + "\n";
  bool default_names = true;
  for (int i = 0; i < m.n; ++i)
    if (m.names[static_cast<std::size_t>(i)] != std::to_string(i + 1))
      default_names = false;
  if (!default_names) {
    out += "names =";
    for (const std::string& name : m.names) out += " " + name;
    out += "\n";
  }
  if (m.allow_self_flows) out += "self_flows = true\n";
  if (!m.param_names.empty()) {
    out += "\n[params]\n";
    for (std::size_t i = 0; i < m.param_names.size(); ++i)
      out += m.param_names[i] + " = " +
             detail::format_double(m.param_values[i]) + "\n";
  }
  out += "\n[inputs]\n";
  for (int i = 0; i < m.n; ++i)
    if (!m.input(i).empty())
      out += std::to_string(i + 1) + " = " + m.input(i).text() + "\n";
  out += "\n[flows]\n";
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j)
      if (!m.intensity(i, j).empty())
        out += std::to_string(i + 1) + "<-" + std::to_string(j + 1) + " = " +
               m.intensity(i, j).text() + "\n";
  out += "\n[outputs]\n";
  for (int i = 0; i < m.n; ++i)
    if (!m.output_intensity(i).empty())
      out += std::to_string(i + 1) + " = " + m.output_intensity(i).text() +
             "\n";
  out += "\n[initial]\n";
  for (int i = 0; i < m.n; ++i)
    out += std::to_string(i + 1) + " = " + detail::format_double(m.x0(i)) +
           "\n";
  const SimulateDefaults& d = m.defaults;
  if (d.has_span || d.samples || d.rtol || d.atol || d.max_step) {
    out += "\n[simulate]\n";
    if (d.has_span) {
      out += "t0 = " + detail::format_double(d.t0) + "\n";
      out += "t1 = " + detail::format_double(d.t1) + "\n";
    }
    if (d.samples) out += "samples = " + std::to_string(d.samples) + "\n";
    if (d.rtol != 0.0) out += "rtol = " + detail::format_double(d.rtol) + "\n";
    if (d.atol != 0.0) out += "atol = " + detail::format_double(d.atol) + "\n";
    if (d.max_step != 0.0)
      out += "max_step = " + detail::format_double(d.max_step) + "\n";
  }
  return out;
}

}  // namespace ecoflux
