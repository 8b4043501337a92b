// Command-line front end: parse and validate models, run the decomposed
// solve, and export every series as plot-ready CSV/JSON tables.
//
// Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 I/O.
// Diagnostics and progress notes go to standard error; data goes to files.

#include <CLI11.hpp>
#include <ecoflux/ecoflux.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace ecoflux;

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

struct Options {
  std::string input;
  std::string out_dir = ".";
  std::string format = "csv";  // csv | json | both
  bool discrete = false;

  double t0 = kUnset, t1 = kUnset;
  int samples = 0;
  double rtol = kUnset, atol = kUnset, max_step = kUnset;

  bool storages = false;
  std::string variants = "diact";
  std::vector<std::string> pairs;
  std::string basis = "flow";
  std::string induction = "inputs";
  std::vector<std::string> paths;
  double t_start = kUnset;
  double path_scale = 1.0;
  double from = kUnset, to = kUnset;
  double recovery_ref = kUnset;
  double recovery_band = 0.05;
  double recovery_floor = 0.01;
  double commensal_min = 0.75;
  double compete_max = 0.25;

  std::string command_line;  // reproduced in the report manifest
};

// ---------------------------------------------------------------------------
// Export plumbing.

class Exporter {
 public:
  Exporter(const Options& o) : dir_(o.out_dir), format_(o.format) {
    std::filesystem::create_directories(dir_);
  }

  void emit(const std::string& stem, const Csv& table) {
    if (format_ == "csv" || format_ == "both")
      write(stem + ".csv", csv_to_string(table));
    if (format_ == "json" || format_ == "both")
      write(stem + ".json", csv_to_json(table).dump(1) + "\n");
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  void write(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    entries_.push_back({name, content.size(), fnv1a64(content)});
  }

  std::filesystem::path dir_;
  std::string format_;
  std::vector<ManifestEntry> entries_;
};

std::string join_labels(const std::vector<std::string>& parts) {
  std::string out;
  for (const std::string& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

// Subsystem label: 0 is the initial-stock subsystem, k >= 1 carries the
// name of the compartment whose input generates it.
std::string sub_label(const std::vector<std::string>& names, int k) {
  return k == 0 ? "0" : names[static_cast<std::size_t>(k - 1)];
}

// ---------------------------------------------------------------------------
// Model-mode table builders. Column names come from compartment names, so
// the schema is stable for a given model.

Csv storage_table(const Analysis& a) {
  const auto& names = a.model.names;
  Csv t;
  t.header = {"t"};
  for (int i = 0; i < a.n(); ++i)
    for (int k = 0; k <= a.n(); ++k)
      t.header.push_back("x_" + names[static_cast<std::size_t>(i)] + "_" +
                         sub_label(names, k));
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    for (int i = 0; i < a.n(); ++i)
      for (int k = 0; k <= a.n(); ++k) row.emplace_back(a.samples[s].X(i, k));
  }
  return t;
}

Csv throughflow_table(const Analysis& a, bool inward) {
  const auto& names = a.model.names;
  const char* prefix = inward ? "tin_" : "tout_";
  Csv t;
  t.header = {"t"};
  for (int i = 0; i < a.n(); ++i)
    for (int k = 0; k <= a.n(); ++k)
      t.header.push_back(prefix + names[static_cast<std::size_t>(i)] + "_" +
                         sub_label(names, k));
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    const Eigen::MatrixXd& M =
        inward ? a.samples[s].T_in : a.samples[s].T_out;
    for (int i = 0; i < a.n(); ++i)
      for (int k = 0; k <= a.n(); ++k) row.emplace_back(M(i, k));
  }
  return t;
}

Csv factors_table(const Analysis& a) {
  const auto& names = a.model.names;
  Csv t;
  t.header = {"t"};
  for (int i = 0; i < a.n(); ++i)
    for (int k = 0; k <= a.n(); ++k)
      t.header.push_back("d_" + names[static_cast<std::size_t>(i)] + "_" +
                         sub_label(names, k));
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    for (int i = 0; i < a.n(); ++i)
      for (int k = 0; k <= a.n(); ++k)
        row.emplace_back(a.samples[s].factors(i, k));
  }
  return t;
}

Csv residence_table(const Analysis& a) {
  ResidenceReport rep = residence_report(a);
  const auto& names = a.model.names;
  Csv t;
  t.header = {"t"};
  for (const std::string& c : names) t.header.push_back("r_" + c);
  if (!rep.rate.empty())
    for (const std::string& c : names) t.header.push_back("drdt_" + c);
  for (std::size_t s = 0; s < rep.t.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(rep.t[s]);
    for (int i = 0; i < a.n(); ++i) row.emplace_back(rep.r[s](i));
    if (!rep.rate.empty())
      for (int i = 0; i < a.n(); ++i) row.emplace_back(rep.rate[s](i));
  }
  return t;
}

Csv exposure_table(const Analysis& a) {
  const auto& names = a.model.names;
  Csv t;
  t.header = {"t"};
  for (int i = 0; i < a.n(); ++i)
    for (int k = 0; k <= a.n(); ++k)
      t.header.push_back("e_" + names[static_cast<std::size_t>(i)] + "_" +
                         sub_label(names, k));
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    for (int i = 0; i < a.n(); ++i)
      for (int k = 0; k <= a.n(); ++k) row.emplace_back(a.exposure[s](i, k));
  }
  return t;
}

Csv system_table(const Analysis& a) {
  Csv t;
  t.header = {"t", "inflow", "outflow", "storage"};
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    row.emplace_back(system_inflow(a.samples[s]));
    row.emplace_back(system_outflow(a.samples[s]));
    row.emplace_back(system_storage(a.samples[s]));
  }
  return t;
}

std::string masked_donors(const DiactMatrices& dm,
                          const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < dm.masked.size(); ++k)
    if (dm.masked[k]) out.push_back(names[k]);
  return join_labels(out);
}

// One file per variant and kind: t, <flows over all ordered pairs>, and a
// text column flagging donors whose own outflow fell below the flow guard.
Csv diact_flow_table(const Analysis& a, Variant v, bool composite) {
  const auto& names = a.model.names;
  Csv t;
  t.header = {"t"};
  std::string prefix = std::string("flow_") + variant_letter(v) + "_";
  for (int i = 0; i < a.n(); ++i)
    for (int k = 0; k < a.n(); ++k)
      t.header.push_back(prefix + names[static_cast<std::size_t>(i)] + "_" +
                         names[static_cast<std::size_t>(k)]);
  t.header.push_back("masked");
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    Eigen::MatrixXd M = composite ? a.composite_flow(s, v)
                                  : a.simple_flow(s, v);
    for (int i = 0; i < a.n(); ++i)
      for (int k = 0; k < a.n(); ++k) row.emplace_back(M(i, k));
    row.emplace_back(masked_donors(a.diact[s], names));
  }
  return t;
}

Csv diact_storage_table(const Analysis& a, Variant v, bool composite) {
  const auto& series = composite
                           ? a.storage_composite[static_cast<std::size_t>(v)]
                           : a.storage_simple[static_cast<std::size_t>(v)];
  const auto& names = a.model.names;
  Csv t;
  t.header = {"t"};
  std::string prefix = std::string("storage_") + variant_letter(v) + "_";
  for (int i = 0; i < a.n(); ++i)
    for (int k = 0; k < a.n(); ++k)
      t.header.push_back(prefix + names[static_cast<std::size_t>(i)] + "_" +
                         names[static_cast<std::size_t>(k)]);
  t.header.push_back("masked");
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    for (int i = 0; i < a.n(); ++i)
      for (int k = 0; k < a.n(); ++k) row.emplace_back(series[s](i, k));
    row.emplace_back(masked_donors(a.diact[s], names));
  }
  return t;
}

Csv transient_table(const TransientTrace& tr,
                    const std::vector<std::string>& names) {
  Csv t;
  t.header = {"t"};
  const std::size_t links = tr.storage.size();
  auto node = [&](std::size_t l) {
    return names[static_cast<std::size_t>(
        tr.path.nodes[static_cast<std::size_t>(l)])];
  };
  for (std::size_t l = 0; l < links; ++l) {
    std::string tag = node(l) + "_" + node(l + 1);
    t.header.push_back("inflow_" + tag);
    t.header.push_back("storage_" + tag);
    if (l + 1 < links)
      t.header.push_back("outflow_" + node(l + 1) + "_" + node(l + 2));
    t.header.push_back("residence_" + node(l + 1));
    t.header.push_back("exposure_" + tag);
  }
  for (std::size_t s = 0; s < tr.grid.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(tr.grid[s]);
    for (std::size_t l = 0; l < links; ++l) {
      row.emplace_back(tr.inflow[l][s]);
      row.emplace_back(tr.storage[l][s]);
      if (l + 1 < links) row.emplace_back(tr.outflow[l][s]);
      row.emplace_back(tr.residence[l][s]);
      row.emplace_back(tr.exposure[l][s]);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Option decoding.

Basis parse_basis(const std::string& s) {
  if (s == "flow") return Basis::flow;
  if (s == "storage") return Basis::storage;
  throw std::invalid_argument("basis must be 'flow' or 'storage'");
}

Induction parse_induction(const std::string& s) {
  if (s == "inputs") return Induction::all_inputs;
  if (s == "initial") return Induction::initial_stocks;
  if (s == "single") return Induction::single_input;
  throw std::invalid_argument(
      "induction must be 'inputs', 'initial', or 'single'");
}

std::vector<Variant> parse_variants(const std::string& s) {
  std::vector<Variant> out;
  for (char c : s) {
    std::string letters = "diact";
    std::size_t pos = letters.find(c);
    if (pos == std::string::npos)
      throw std::invalid_argument(
          std::string("unknown variant letter '") + c +
          "' (expected a subset of \"diact\")");
    Variant v = static_cast<Variant>(pos);
    bool dup = false;
    for (Variant w : out) dup = dup || w == v;
    if (!dup) out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("no variants selected");
  return out;
}

std::pair<int, int> parse_pair(const std::string& s,
                               const std::function<int(std::string_view)>&
                                   resolve) {
  std::size_t comma = s.find(',');
  if (comma == std::string::npos)
    throw std::invalid_argument("pair '" + s + "' must look like 'i,j'");
  auto trim = [](std::string_view v) {
    while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
    while (!v.empty() && v.back() == ' ') v.remove_suffix(1);
    return v;
  };
  std::string_view a = trim(std::string_view(s).substr(0, comma));
  std::string_view b = trim(std::string_view(s).substr(comma + 1));
  int i = resolve(a), j = resolve(b);
  if (i < 0)
    throw std::invalid_argument("pair '" + s + "': unknown compartment '" +
                                std::string(a) + "'");
  if (j < 0)
    throw std::invalid_argument("pair '" + s + "': unknown compartment '" +
                                std::string(b) + "'");
  return {i, j};
}

int resolve_name(const std::vector<std::string>& names, std::string_view key) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == key) return static_cast<int>(i);
  int idx = 0;
  auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
  if (ec == std::errc{} && ptr == key.data() + key.size() && idx >= 1 &&
      idx <= static_cast<int>(names.size()))
    return idx - 1;
  return -1;
}

// Pair list for indices: explicit pairs, else the diagonal (per-compartment
// self indices). For interactions: explicit pairs, else all unordered pairs.
std::vector<std::pair<int, int>> pair_list(
    const Options& o, const std::vector<std::string>& names, bool diagonal) {
  std::vector<std::pair<int, int>> out;
  if (!o.pairs.empty()) {
    for (const std::string& s : o.pairs)
      out.push_back(parse_pair(
          s, [&](std::string_view k) { return resolve_name(names, k); }));
    return out;
  }
  int n = static_cast<int>(names.size());
  if (diagonal) {
    for (int i = 0; i < n; ++i) out.emplace_back(i, i);
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  }
  return out;
}

ode::IntegrationSpec make_spec(const CompartmentalModel& m, const Options& o) {
  ode::IntegrationSpec spec;
  const SimulateDefaults& d = m.defaults;
  spec.t0 = !std::isnan(o.t0) ? o.t0 : (d.has_span ? d.t0 : 0.0);
  spec.t1 = !std::isnan(o.t1) ? o.t1 : (d.has_span ? d.t1 : spec.t0 + 10.0);
  int samples = o.samples > 0 ? o.samples : (d.samples > 0 ? d.samples : 201);
  if (samples < 5)
    throw std::invalid_argument("need at least 5 samples, got " +
                                std::to_string(samples));
  if (!std::isnan(o.rtol)) spec.rtol = o.rtol;
  else if (d.rtol > 0.0) spec.rtol = d.rtol;
  if (!std::isnan(o.atol)) spec.atol = o.atol;
  else if (d.atol > 0.0) spec.atol = d.atol;
  if (!std::isnan(o.max_step)) spec.max_step = o.max_step;
  else if (d.max_step > 0.0) spec.max_step = d.max_step;
  spec.sample_grid = ode::linspace(spec.t0, spec.t1, samples);
  return spec;
}

CompartmentalModel load_model(const Options& o) {
  return parse_model_file(o.input);
}

Analysis run_analysis(const Options& o, AnalyzeOptions aopts) {
  CompartmentalModel m = load_model(o);
  aopts.spec = make_spec(m, o);
  if (!o.paths.empty()) {
    for (const std::string& s : o.paths) {
      FlowPath p = parse_path(s, m);
      if (!std::isnan(o.t_start)) p.start = o.t_start;
      aopts.paths.push_back(std::move(p));
    }
    aopts.path_scale = o.path_scale;
  }
  Analysis a = analyze(m, aopts);
  std::cerr << "solved: " << a.stats.steps << " steps, " << a.stats.rhs_evals
            << " rhs evals, " << a.size() << " samples\n";
  return a;
}

// ---------------------------------------------------------------------------
// Commands, dynamic mode.

int cmd_validate(const Options& o) {
  CompartmentalModel m;
  try {
    m = parse_model_file(o.input);
  } catch (const ModelError& e) {
    std::cerr << format_diagnostics(e.diagnostics());
    return 1;
  }
  // Surviving diagnostics are warnings; show them but succeed.
  std::vector<Diagnostic> ds = validate_model(m);
  std::cerr << format_diagnostics(ds);
  int flows = 0;
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j)
      if (!m.intensity(i, j).empty()) ++flows;
  std::cout << "ok: " << m.n << " compartments, " << flows << " flows, "
            << m.param_names.size() << " parameters\n";
  return 0;
}

int cmd_simulate(const Options& o) {
  AnalyzeOptions aopts;
  aopts.exposure = false;
  Analysis a = run_analysis(o, aopts);
  Exporter ex(o);
  ex.emit("storage", storage_table(a));
  return 0;
}

int cmd_partition(const Options& o) {
  Analysis a = run_analysis(o, AnalyzeOptions{});
  Exporter ex(o);
  ex.emit("storage", storage_table(a));
  ex.emit("throughflow_in", throughflow_table(a, true));
  ex.emit("throughflow_out", throughflow_table(a, false));
  ex.emit("factors", factors_table(a));
  ex.emit("residence", residence_table(a));
  ex.emit("exposure", exposure_table(a));
  ex.emit("system", system_table(a));
  return 0;
}

int cmd_transient(const Options& o) {
  if (o.paths.empty())
    throw std::invalid_argument("transient needs at least one --path");
  AnalyzeOptions aopts;
  aopts.exposure = false;
  Analysis a = run_analysis(o, aopts);
  Exporter ex(o);
  for (std::size_t p = 0; p < a.traces.size(); ++p)
    ex.emit("transient_" + std::to_string(p + 1),
            transient_table(a.traces[p], a.model.names));
  return 0;
}

void emit_diact(const Analysis& a, const Options& o, Exporter& ex) {
  for (Variant v : parse_variants(o.variants)) {
    std::string letter(1, variant_letter(v));
    ex.emit("flow_composite_" + letter, diact_flow_table(a, v, true));
    ex.emit("flow_simple_" + letter, diact_flow_table(a, v, false));
    if (o.storages) {
      ex.emit("storage_composite_" + letter, diact_storage_table(a, v, true));
      ex.emit("storage_simple_" + letter, diact_storage_table(a, v, false));
    }
  }
}

int cmd_diact(const Options& o) {
  AnalyzeOptions aopts;
  aopts.exposure = false;
  aopts.storages = o.storages;
  Analysis a = run_analysis(o, aopts);
  Exporter ex(o);
  emit_diact(a, o, ex);
  return 0;
}

// Effect index series for the chosen pairs and variants, with stencil
// efficiencies (the cycling one is the system stress).
Csv indices_table(const Analysis& a, const Options& o) {
  Basis basis = parse_basis(o.basis);
  FlowKind kind = induction_kind(parse_induction(o.induction));
  std::vector<Variant> variants = parse_variants(o.variants);
  auto pairs = pair_list(o, a.model.names, true);
  const auto& names = a.model.names;

  Csv t;
  t.header = {"t"};
  struct Col {
    std::vector<double> effect, efficiency, utility;
    bool has_utility = false;
  };
  std::vector<Col> cols;
  for (Variant v : variants) {
    MatrixSeries effect = effect_matrix(a, v, basis, kind);
    MatrixSeries rate = derivative_series(effect);
    for (auto [i, j] : pairs) {
      std::string letter(1, variant_letter(v));
      std::string tag = "_" + letter + "_" + names[static_cast<std::size_t>(i)] +
                        "_" + names[static_cast<std::size_t>(j)];
      Col col;
      col.effect.resize(a.size());
      col.efficiency.resize(a.size());
      for (std::size_t s = 0; s < a.size(); ++s) {
        col.effect[s] = effect.v[s](i, j);
        col.efficiency[s] = rate.v[s](i, j);
      }
      t.header.push_back("effect" + tag);
      t.header.push_back(v == Variant::cycling
                             ? "stress_" + names[static_cast<std::size_t>(i)] +
                                   "_" + names[static_cast<std::size_t>(j)]
                             : "efficiency" + tag);
      if (i != j) {
        col.has_utility = true;
        col.utility.resize(a.size());
        for (std::size_t s = 0; s < a.size(); ++s)
          col.utility[s] = effect.v[s](i, j) - effect.v[s](j, i);
        t.header.push_back("utility" + tag);
      }
      cols.push_back(std::move(col));
    }
  }
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    for (const Col& c : cols) {
      row.emplace_back(c.effect[s]);
      row.emplace_back(c.efficiency[s]);
      if (c.has_utility) row.emplace_back(c.utility[s]);
    }
  }
  return t;
}

Csv averages_table(const Analysis& a, double from, double to) {
  AverageIndices avg = average_indices(a, from, to);
  Csv t;
  t.header = {"variant", "from", "to", "composite_flow", "simple_flow",
              "composite_storage", "simple_storage"};
  for (Variant v : all_variants) {
    auto u = static_cast<std::size_t>(v);
    auto& row = t.add_row();
    row.emplace_back(std::string(variant_name(v)));
    row.emplace_back(avg.from);
    row.emplace_back(avg.to);
    row.emplace_back(avg.composite_flow[u]);
    row.emplace_back(avg.simple_flow[u]);
    row.emplace_back(avg.composite_storage[u]);
    row.emplace_back(avg.simple_storage[u]);
  }
  return t;
}

Csv exposure_window_table(const Analysis& a, double from, double to) {
  ExposureReport rep = exposures(a, from, to);
  const auto& names = a.model.names;
  Csv t;
  t.header = {"compartment"};
  for (int k = 0; k <= a.n(); ++k)
    t.header.push_back("e_" + sub_label(names, k));
  t.header.push_back("total");
  for (int i = 0; i < a.n(); ++i) {
    auto& row = t.add_row();
    row.emplace_back(names[static_cast<std::size_t>(i)]);
    for (int k = 0; k <= a.n(); ++k) row.emplace_back(rep.full(i, k));
    row.emplace_back(rep.by_compartment(i));
  }
  return t;
}

Csv recovery_table(const Analysis& a, const Options& o) {
  RecoveryDiagnostic rec = recovery_diagnostic(a, o.recovery_ref,
                                               o.recovery_band,
                                               o.recovery_floor);
  Csv t;
  t.header = {"t_ref", "rel_band", "floor_frac", "onset", "recovery",
              "interval", "in_band_at_end"};
  auto& row = t.add_row();
  row.emplace_back(rec.t_ref);
  row.emplace_back(rec.rel_band);
  row.emplace_back(rec.floor_frac);
  row.emplace_back(rec.onset);
  row.emplace_back(rec.recovery);
  row.emplace_back(rec.interval);
  row.emplace_back(std::string(rec.in_band_at_end ? "yes" : "no"));
  std::cerr << "recovery: onset "
            << (std::isnan(rec.onset) ? std::string("none")
                                      : detail::format_double(rec.onset))
            << ", interval "
            << (std::isnan(rec.interval) ? std::string("none")
                                         : detail::format_double(rec.interval))
            << ", in band at end: " << (rec.in_band_at_end ? "yes" : "no")
            << "\n";
  return t;
}

int cmd_indices(const Options& o) {
  bool windowed = !std::isnan(o.from) && !std::isnan(o.to);
  AnalyzeOptions aopts;
  aopts.storages = true;  // storage-basis indices are always available
  aopts.index_integrals = windowed;
  aopts.exposure = windowed;
  Analysis a = run_analysis(o, aopts);
  Exporter ex(o);
  ex.emit("indices", indices_table(a, o));
  if (windowed) {
    ex.emit("averages", averages_table(a, o.from, o.to));
    ex.emit("exposure_window", exposure_window_table(a, o.from, o.to));
  }
  if (!std::isnan(o.recovery_ref)) ex.emit("recovery", recovery_table(a, o));
  return 0;
}

const char* verdict_label(InteractionType t) { return interaction_name(t); }

std::string pair_tag(const std::vector<std::string>& names,
                     std::pair<int, int> p) {
  return names[static_cast<std::size_t>(p.first)] + "_" +
         names[static_cast<std::size_t>(p.second)];
}

Csv interactions_table(const Analysis& a, const Options& o,
                       const std::vector<std::pair<int, int>>& pairs,
                       const std::vector<VerdictSeries>& verdicts) {
  const auto& names = a.model.names;
  Basis basis = parse_basis(o.basis);
  Induction ind = parse_induction(o.induction);
  Csv t;
  t.header = {"t"};
  std::vector<GlobalStrengths> globals;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    std::string tag = "_" + pair_tag(names, pairs[p]);
    t.header.push_back("type" + tag);
    t.header.push_back("strength" + tag);
    t.header.push_back("exploiter" + tag);
    t.header.push_back("mutualism" + tag);
    t.header.push_back("exploitation_over_out" + tag);
    t.header.push_back("exploitation_over_in" + tag);
    globals.push_back(global_strengths(a, pairs[p], basis, ind));
  }
  for (std::size_t s = 0; s < a.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(a.grid[s]);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const Verdict& v = verdicts[p].v[s];
      row.emplace_back(std::string(verdict_label(v.type)));
      row.emplace_back(v.strength);
      if (v.type == InteractionType::exploitation && v.exploiter >= 0)
        row.emplace_back(names[static_cast<std::size_t>(v.exploiter)]);
      else
        row.emplace_back(Cell{});
      row.emplace_back(globals[p].mutualism[s]);
      row.emplace_back(globals[p].exploitation_over_out[s]);
      row.emplace_back(globals[p].exploitation_over_in[s]);
    }
  }
  return t;
}

// Horizon summary per pair: sample counts per verdict and the modal
// non-neutral verdict, formatted like "exploitation(3,2)" with the
// exploiter first.
Csv interaction_summary_table(const std::vector<std::string>& names,
                              const std::vector<std::pair<int, int>>& pairs,
                              const std::vector<VerdictSeries>& verdicts,
                              std::string* headline) {
  Csv t;
  t.header = {"pair", "samples", "neutralism", "mutualism", "commensalism",
              "competition", "mixed", "exploitation", "unclassified",
              "ambiguous", "verdict"};
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const VerdictSeries& vs = verdicts[p];
    std::array<std::size_t, 8> counts{};
    std::array<std::size_t, 2> exploiter_counts{};  // [first, second]
    for (const Verdict& v : vs.v) {
      counts[static_cast<std::size_t>(v.type)]++;
      if (v.type == InteractionType::exploitation)
        exploiter_counts[v.exploiter == pairs[p].first ? 0 : 1]++;
    }
    InteractionType best = InteractionType::neutralism;
    std::size_t best_count = 0;
    for (InteractionType ty :
         {InteractionType::mutualism, InteractionType::commensalism,
          InteractionType::competition, InteractionType::mixed_donor_mediated,
          InteractionType::exploitation, InteractionType::ambiguous}) {
      std::size_t c = counts[static_cast<std::size_t>(ty)];
      if (c > best_count) {
        best = ty;
        best_count = c;
      }
    }
    std::string a = names[static_cast<std::size_t>(pairs[p].first)];
    std::string b = names[static_cast<std::size_t>(pairs[p].second)];
    std::string verdict;
    if (best == InteractionType::exploitation &&
        exploiter_counts[1] > exploiter_counts[0])
      verdict = std::string(verdict_label(best)) + "(" + b + "," + a + ")";
    else
      verdict = std::string(verdict_label(best)) + "(" + a + "," + b + ")";
    auto& row = t.add_row();
    row.emplace_back(a + "," + b);
    row.push_back(Cell::integer(static_cast<long long>(vs.v.size())));
    for (InteractionType ty :
         {InteractionType::neutralism, InteractionType::mutualism,
          InteractionType::commensalism, InteractionType::competition,
          InteractionType::mixed_donor_mediated, InteractionType::exploitation,
          InteractionType::unclassified, InteractionType::ambiguous})
      row.push_back(Cell::integer(
          static_cast<long long>(counts[static_cast<std::size_t>(ty)])));
    row.emplace_back(verdict);
    if (headline && best != InteractionType::neutralism) {
      if (!headline->empty()) *headline += "; ";
      *headline += verdict;
    }
  }
  return t;
}

int cmd_interactions(const Options& o) {
  AnalyzeOptions aopts;
  aopts.storages = true;
  aopts.exposure = false;
  Analysis a = run_analysis(o, aopts);
  auto pairs = pair_list(o, a.model.names, false);
  ClassifyOptions copts;
  copts.basis = parse_basis(o.basis);
  copts.induction = parse_induction(o.induction);
  copts.commensal_min = o.commensal_min;
  copts.compete_max = o.compete_max;
  std::vector<VerdictSeries> verdicts;
  for (auto p : pairs) verdicts.push_back(classify_pair(a, p, copts));
  Exporter ex(o);
  ex.emit("interactions", interactions_table(a, o, pairs, verdicts));
  std::string headline;
  ex.emit("interaction_summary",
          interaction_summary_table(a.model.names, pairs, verdicts,
                                    &headline));
  if (!headline.empty()) std::cout << headline << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  bool windowed = !std::isnan(o.from) && !std::isnan(o.to);
  AnalyzeOptions aopts;
  aopts.storages = true;
  aopts.index_integrals = windowed;
  Analysis a = run_analysis(o, aopts);
  Exporter ex(o);
  ex.emit("storage", storage_table(a));
  ex.emit("throughflow_in", throughflow_table(a, true));
  ex.emit("throughflow_out", throughflow_table(a, false));
  ex.emit("factors", factors_table(a));
  ex.emit("residence", residence_table(a));
  ex.emit("exposure", exposure_table(a));
  ex.emit("system", system_table(a));
  Options with_storages = o;
  with_storages.storages = true;
  emit_diact(a, with_storages, ex);
  ex.emit("indices", indices_table(a, o));
  if (windowed) {
    ex.emit("averages", averages_table(a, o.from, o.to));
    ex.emit("exposure_window", exposure_window_table(a, o.from, o.to));
  }
  if (!std::isnan(o.recovery_ref)) ex.emit("recovery", recovery_table(a, o));
  auto pairs = pair_list(o, a.model.names, false);
  ClassifyOptions copts;
  copts.basis = parse_basis(o.basis);
  copts.induction = parse_induction(o.induction);
  copts.commensal_min = o.commensal_min;
  copts.compete_max = o.compete_max;
  std::vector<VerdictSeries> verdicts;
  for (auto p : pairs) verdicts.push_back(classify_pair(a, p, copts));
  ex.emit("interactions", interactions_table(a, o, pairs, verdicts));
  ex.emit("interaction_summary",
          interaction_summary_table(a.model.names, pairs, verdicts, nullptr));
  for (std::size_t p = 0; p < a.traces.size(); ++p)
    ex.emit("transient_" + std::to_string(p + 1),
            transient_table(a.traces[p], a.model.names));
  write_manifest(ex.dir(), o.command_line, ex.entries());
  return 0;
}

// ---------------------------------------------------------------------------
// Commands, sequence-of-steady-states mode.

DiscreteSeries load_discrete(const Options& o) {
  DiscreteSeries ds = discrete_series_from_file(o.input);
  std::cerr << format_diagnostics(ds.diagnostics);
  if (has_errors(ds.diagnostics)) throw ModelError(ds.diagnostics);
  return ds;
}

Csv discrete_throughflow_table(const DiscreteSeries& ds) {
  Csv t;
  t.header = {"t"};
  for (const std::string& c : ds.names) t.header.push_back("tin_" + c);
  for (const std::string& c : ds.names) t.header.push_back("tout_" + c);
  if (ds.has_stocks)
    for (const std::string& c : ds.names) t.header.push_back("r_" + c);
  for (const DiscreteStep& st : ds.steps) {
    auto& row = t.add_row();
    row.emplace_back(st.t);
    for (int i = 0; i < ds.n(); ++i) row.emplace_back(st.tau_in(i));
    for (int i = 0; i < ds.n(); ++i) row.emplace_back(st.tau_out(i));
    if (ds.has_stocks)
      for (int i = 0; i < ds.n(); ++i) row.emplace_back(st.residence(i));
  }
  return t;
}

Csv discrete_flow_table(const DiscreteSeries& ds, Variant v) {
  Csv t;
  t.header = {"t"};
  std::string prefix = std::string("flow_") + variant_letter(v) + "_";
  for (int i = 0; i < ds.n(); ++i)
    for (int k = 0; k < ds.n(); ++k)
      t.header.push_back(prefix + ds.names[static_cast<std::size_t>(i)] + "_" +
                         ds.names[static_cast<std::size_t>(k)]);
  t.header.push_back("masked");
  for (const DiscreteStep& st : ds.steps) {
    auto& row = t.add_row();
    row.emplace_back(st.t);
    Eigen::MatrixXd M = simple_flows(st.diact, v);
    for (int i = 0; i < ds.n(); ++i)
      for (int k = 0; k < ds.n(); ++k) row.emplace_back(M(i, k));
    std::vector<std::string> masked;
    for (std::size_t k = 0; k < st.diact.masked.size(); ++k)
      if (st.diact.masked[k]) masked.push_back(ds.names[k]);
    row.emplace_back(join_labels(masked));
  }
  return t;
}

// Effect indices per step with difference-quotient efficiencies: forward
// quotient toward the next step, empty on the last one.
Csv discrete_indices_table(const DiscreteSeries& ds, const Options& o) {
  if (parse_basis(o.basis) != Basis::flow)
    throw std::invalid_argument(
        "steady-snapshot tables support flow-basis indices only");
  std::vector<Variant> variants = parse_variants(o.variants);
  auto pairs = pair_list(o, ds.names, true);
  const std::size_t ns = ds.size();

  std::vector<double> sigma(ns);
  for (std::size_t s = 0; s < ns; ++s) sigma[s] = ds.steps[s].tau_in.sum();

  Csv t;
  t.header = {"t"};
  std::vector<std::vector<double>> effects;  // one series per column
  for (Variant v : variants) {
    for (auto [i, j] : pairs) {
      std::string letter(1, variant_letter(v));
      std::string tag = "_" + letter + "_" +
                        ds.names[static_cast<std::size_t>(i)] + "_" +
                        ds.names[static_cast<std::size_t>(j)];
      std::vector<double> e(ns);
      for (std::size_t s = 0; s < ns; ++s) {
        Eigen::MatrixXd M = simple_flows(ds.steps[s].diact, v);
        e[s] = sigma[s] > 0.0 ? M(i, j) / sigma[s]
                              : std::numeric_limits<double>::quiet_NaN();
      }
      t.header.push_back("effect" + tag);
      t.header.push_back(v == Variant::cycling
                             ? "stress_" + ds.names[static_cast<std::size_t>(i)] +
                                   "_" + ds.names[static_cast<std::size_t>(j)]
                             : "efficiency" + tag);
      effects.push_back(std::move(e));
    }
  }
  for (std::size_t s = 0; s < ns; ++s) {
    auto& row = t.add_row();
    row.emplace_back(ds.steps[s].t);
    for (const std::vector<double>& e : effects) {
      row.emplace_back(e[s]);
      if (s + 1 < ns && ds.steps[s + 1].t > ds.steps[s].t)
        row.emplace_back((e[s + 1] - e[s]) /
                         (ds.steps[s + 1].t - ds.steps[s].t));
      else
        row.emplace_back(Cell{});
    }
  }
  return t;
}

std::vector<VerdictSeries> discrete_verdicts(
    const DiscreteSeries& ds, const Options& o,
    const std::vector<std::pair<int, int>>& pairs) {
  ClassifyOptions copts;
  copts.basis = Basis::flow;
  copts.induction = parse_induction(o.induction);
  copts.commensal_min = o.commensal_min;
  copts.compete_max = o.compete_max;
  std::vector<VerdictSeries> out;
  for (auto p : pairs) {
    VerdictSeries vs;
    vs.i = p.first;
    vs.j = p.second;
    vs.options = copts;
    for (const DiscreteStep& st : ds.steps) {
      vs.t.push_back(st.t);
      Eigen::MatrixXd D = simple_flows(st.diact, Variant::direct);
      Eigen::MatrixXd I = simple_flows(st.diact, Variant::indirect);
      double eps = 1e-9 * st.tau_in.sum();
      vs.v.push_back(classify_sample(D, I, p.first, p.second, st.tau_in,
                                     st.tau_out, eps, copts));
    }
    out.push_back(std::move(vs));
  }
  return out;
}

Csv discrete_interactions_table(
    const DiscreteSeries& ds,
    const std::vector<std::pair<int, int>>& pairs,
    const std::vector<VerdictSeries>& verdicts) {
  Csv t;
  t.header = {"t"};
  for (auto p : pairs) {
    std::string tag = "_" + pair_tag(ds.names, p);
    t.header.push_back("type" + tag);
    t.header.push_back("strength" + tag);
    t.header.push_back("exploiter" + tag);
  }
  for (std::size_t s = 0; s < ds.size(); ++s) {
    auto& row = t.add_row();
    row.emplace_back(ds.steps[s].t);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const Verdict& v = verdicts[p].v[s];
      row.emplace_back(std::string(verdict_label(v.type)));
      row.emplace_back(v.strength);
      if (v.type == InteractionType::exploitation && v.exploiter >= 0)
        row.emplace_back(ds.names[static_cast<std::size_t>(v.exploiter)]);
      else
        row.emplace_back(Cell{});
    }
  }
  return t;
}

Csv discrete_storage_table(const DiscreteSeries& ds) {
  Csv t;
  t.header = {"t"};
  for (int i = 0; i < ds.n(); ++i)
    for (int k = 0; k <= ds.n(); ++k)
      t.header.push_back("x_" + ds.names[static_cast<std::size_t>(i)] + "_" +
                         sub_label(ds.names, k));
  for (const DiscreteStep& st : ds.steps) {
    auto& row = t.add_row();
    row.emplace_back(st.t);
    for (int i = 0; i < ds.n(); ++i)
      for (int k = 0; k <= ds.n(); ++k) row.emplace_back(st.X(i, k));
  }
  return t;
}

int cmd_discrete(const Options& o, const std::string& command) {
  DiscreteSeries ds = load_discrete(o);
  Exporter ex(o);
  bool all = command == "report";
  if (all || command == "diact") {
    ex.emit("throughflow", discrete_throughflow_table(ds));
    if (ds.has_stocks) ex.emit("storage", discrete_storage_table(ds));
    for (Variant v : parse_variants(o.variants))
      ex.emit(std::string("flow_") + variant_letter(v),
              discrete_flow_table(ds, v));
  }
  if (all || command == "indices")
    ex.emit("indices", discrete_indices_table(ds, o));
  if (all || command == "interactions") {
    auto pairs = pair_list(o, ds.names, false);
    auto verdicts = discrete_verdicts(ds, o, pairs);
    ex.emit("interactions",
            discrete_interactions_table(ds, pairs, verdicts));
    std::string headline;
    ex.emit("interaction_summary",
            interaction_summary_table(ds.names, pairs, verdicts,
                                      all ? nullptr : &headline));
    if (!headline.empty()) std::cout << headline << "\n";
  }
  if (all) write_manifest(ex.dir(), o.command_line, ex.entries());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ecoflux;
  Options o;
  for (int i = 0; i < argc; ++i) {
    if (i) o.command_line += ' ';
    o.command_line += argv[i];
  }

  CLI::App app{"compartmental flow analysis"};
  app.require_subcommand(1);

  std::string command;
  auto add_common = [&](CLI::App* sub, bool solver, bool discrete_ok) {
    sub->add_option("input", o.input,
                    discrete_ok ? "model file (or steady-state table with "
                                  "--discrete)"
                                : "model file")
        ->required();
    sub->add_option("--out", o.out_dir, "output directory (default '.')");
    sub->add_option("--format", o.format, "csv | json | both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
    if (solver) {
      sub->add_option("--t0", o.t0, "integration start");
      sub->add_option("--t1", o.t1, "integration end");
      sub->add_option("--samples", o.samples, "sample count (at least 5)");
      sub->add_option("--rtol", o.rtol, "relative tolerance");
      sub->add_option("--atol", o.atol, "absolute tolerance");
      sub->add_option("--max-step", o.max_step, "step size cap");
    }
    if (discrete_ok)
      sub->add_flag("--discrete", o.discrete,
                    "treat input as a table of steady snapshots");
    sub->callback([&, sub] { command = sub->get_name(); });
    return sub;
  };

  add_common(app.add_subcommand("validate", "check a model file"), false,
             false);
  add_common(app.add_subcommand("simulate", "solve and export substorages"),
             true, false);
  add_common(app.add_subcommand(
                 "partition",
                 "substorages, subthroughflows, factors, residence, exposure"),
             true, false);

  CLI::App* transient = add_common(
      app.add_subcommand("transient", "track flow along specific paths"),
      true, false);
  transient->add_option("--path", o.paths,
                        "flow path 'subsystem: a -> b -> c' (repeatable)");
  transient->add_option("--t-start", o.t_start, "gate time for all paths");
  transient->add_option("--scale", o.path_scale, "head inflow scale factor");

  CLI::App* diact = add_common(
      app.add_subcommand("diact", "five-way flow decomposition series"), true,
      true);
  diact->add_option("--variants", o.variants, "subset of \"diact\"");
  diact->add_flag("--storages", o.storages, "also export decomposed storages");

  CLI::App* indices = add_common(
      app.add_subcommand("indices", "effect indices and efficiencies"), true,
      true);
  indices->add_option("--variants", o.variants, "subset of \"diact\"");
  indices->add_option("--pair", o.pairs,
                      "compartment pair 'i,j' (repeatable; default: each "
                      "compartment with itself)");
  indices->add_option("--basis", o.basis, "flow | storage");
  indices->add_option("--induction", o.induction,
                      "inputs | initial | single");
  indices->add_option("--from", o.from, "window start (averages, exposures)");
  indices->add_option("--to", o.to, "window end");
  indices->add_option("--recovery-ref", o.recovery_ref,
                      "reference time for the recovery diagnostic");
  indices->add_option("--recovery-band", o.recovery_band,
                      "relative band width");
  indices->add_option("--recovery-floor", o.recovery_floor,
                      "band floor as a fraction of compartment storage");

  CLI::App* inter = add_common(
      app.add_subcommand("interactions", "pairwise verdicts and strengths"),
      true, true);
  inter->add_option("--pair", o.pairs,
                    "compartment pair 'i,j' (repeatable; default: all pairs)");
  inter->add_option("--basis", o.basis, "flow | storage");
  inter->add_option("--induction", o.induction, "inputs | initial | single");
  inter->add_option("--commensal-min", o.commensal_min,
                    "donor-share threshold for commensalism");
  inter->add_option("--compete-max", o.compete_max,
                    "donor-share threshold for competition");

  CLI::App* report = add_common(
      app.add_subcommand("report",
                         "full pipeline with a checksummed manifest"),
      true, true);
  report->add_option("--variants", o.variants, "subset of \"diact\"");
  report->add_option("--pair", o.pairs, "compartment pair (repeatable)");
  report->add_option("--basis", o.basis, "flow | storage");
  report->add_option("--induction", o.induction, "inputs | initial | single");
  report->add_option("--path", o.paths, "flow path (repeatable)");
  report->add_option("--t-start", o.t_start, "gate time for all paths");
  report->add_option("--from", o.from, "window start");
  report->add_option("--to", o.to, "window end");
  report->add_option("--recovery-ref", o.recovery_ref,
                     "reference time for the recovery diagnostic");
  report->add_option("--recovery-band", o.recovery_band,
                     "relative band width");
  report->add_option("--recovery-floor", o.recovery_floor,
                     "band floor as a fraction of compartment storage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (o.discrete) {
      if (command != "diact" && command != "indices" &&
          command != "interactions" && command != "report")
        throw std::invalid_argument("--discrete applies to diact, indices, "
                                    "interactions, and report only");
      return cmd_discrete(o, command);
    }
    if (command == "validate") return cmd_validate(o);
    if (command == "simulate") return cmd_simulate(o);
    if (command == "partition") return cmd_partition(o);
    if (command == "transient") return cmd_transient(o);
    if (command == "diact") return cmd_diact(o);
    if (command == "indices") return cmd_indices(o);
    if (command == "interactions") return cmd_interactions(o);
    if (command == "report") return cmd_report(o);
    std::cerr << "unknown command\n";
    return 1;
  } catch (const ModelError& e) {
    std::cerr << format_diagnostics(e.diagnostics());
    return 1;
  } catch (const ode::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const EvalError& e) {
    std::cerr << "evaluation failure: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse failure: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid request: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
