#include "pstmle/io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pstmle {

std::string format_double(double x) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", x);
  return buffer;
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
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower;
  for (char c : cell) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return lower == "na" || lower == "nan";
}

double parse_number(const std::string& cell, bool& ok) {
  try {
    std::size_t pos = 0;
    double v = std::stod(cell, &pos);
    ok = pos == cell.size();
    return v;
  } catch (...) {
    ok = false;
    return 0.0;
  }
}

}  // namespace

Dataset ingest_csv(const std::string& path, const ColumnMap& columns, BiomarkerKind kind) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open input file: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("empty input file: " + path);
  }
  std::vector<std::string> header = split(line, ',');
  for (auto& h : header) h = trim(h);

  auto find_col = [&](const std::string& name, bool required) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    if (required) {
      throw DataError("missing mandatory column: " + name);
    }
    return -1;
  };

  if (columns.covariates.empty()) {
    throw ConfigError("no covariate columns configured");
  }
  std::vector<int> cov_idx;
  for (const auto& name : columns.covariates) {
    cov_idx.push_back(find_col(name, true));
  }
  int idx_a = find_col(columns.arm, true);
  int idx_y = find_col(columns.outcome, true);
  int idx_s = find_col(columns.biomarker, true);
  int idx_sc = find_col(columns.crossover, true);
  int idx_delta = find_col(columns.delta, false);
  int idx_pi = find_col(columns.pi, false);

  Dataset d;
  d.covariate_dim = static_cast<int>(cov_idx.size());
  d.biomarker_kind = kind;

  std::vector<std::string> problems;
  auto complain = [&](long row, const std::string& column, const std::string& what) {
    problems.push_back("row " + std::to_string(row) + ", column '" + column + "': " + what);
  };

  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line, ',');
    if (cells.size() != header.size()) {
      complain(row, "-", "expected " + std::to_string(header.size()) + " cells, found " +
                             std::to_string(cells.size()));
      continue;
    }
    for (auto& c : cells) c = trim(c);

    Observation o;
    o.w.resize(d.covariate_dim);
    bool ok = true;
    for (int j = 0; j < d.covariate_dim; ++j) {
      bool num_ok = false;
      const std::string& cell = cells[static_cast<std::size_t>(cov_idx[static_cast<std::size_t>(j)])];
      o.w[j] = parse_number(cell, num_ok);
      if (!num_ok) {
        complain(row, columns.covariates[static_cast<std::size_t>(j)], "not numeric: '" + cell + "'");
        ok = false;
      }
    }

    auto binary_field = [&](int idx, const std::string& name, int& out_value) {
      bool num_ok = false;
      double v = parse_number(cells[static_cast<std::size_t>(idx)], num_ok);
      if (!num_ok || (v != 0.0 && v != 1.0)) {
        complain(row, name, "must be 0 or 1, found '" + cells[static_cast<std::size_t>(idx)] + "'");
        ok = false;
        return;
      }
      out_value = static_cast<int>(v);
    };
    binary_field(idx_a, columns.arm, o.a);
    binary_field(idx_y, columns.outcome, o.y);

    auto optional_field = [&](int idx, const std::string& name, std::optional<double>& out_value) {
      const std::string& cell = cells[static_cast<std::size_t>(idx)];
      if (is_missing(cell)) {
        out_value.reset();
        return;
      }
      bool num_ok = false;
      double v = parse_number(cell, num_ok);
      if (!num_ok) {
        complain(row, name, "not numeric: '" + cell + "'");
        ok = false;
        return;
      }
      out_value = v;
    };
    optional_field(idx_s, columns.biomarker, o.s);
    optional_field(idx_sc, columns.crossover, o.s_c);

    if (idx_delta >= 0) {
      binary_field(idx_delta, columns.delta, o.delta);
    }
    if (idx_pi >= 0) {
      bool num_ok = false;
      double v = parse_number(cells[static_cast<std::size_t>(idx_pi)], num_ok);
      if (!num_ok || !(v > 0.0 && v <= 1.0)) {
        complain(row, columns.pi, "must lie in (0,1], found '" +
                                      cells[static_cast<std::size_t>(idx_pi)] + "'");
        ok = false;
      } else {
        o.pi = v;
      }
    }
    if (ok) {
      d.observations.push_back(std::move(o));
    }
  }

  if (problems.empty()) {
    for (const auto& v : validate_dataset(d)) {
      problems.push_back(v.row < 0 ? "dataset: " + v.message
                                   : "row " + std::to_string(v.row + 1) + ": " + v.message);
    }
  }
  if (!problems.empty()) {
    std::string msg = "malformed input (" + std::to_string(problems.size()) + " problem(s)):";
    for (std::size_t i = 0; i < problems.size() && i < 10; ++i) {
      msg += "\n  " + problems[i];
    }
    throw DataError(msg);
  }
  return d;
}

void write_dataset_csv(const std::string& path, const Dataset& d, const ColumnMap& columns) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open output file: " + path);
  }
  for (const auto& name : columns.covariates) {
    out << name << ',';
  }
  out << columns.arm << ',' << columns.biomarker << ',' << columns.outcome << ','
      << columns.crossover << ',' << columns.delta << ',' << columns.pi << '\n';
  for (const auto& o : d.observations) {
    for (int j = 0; j < d.covariate_dim; ++j) {
      out << format_double(o.w[j]) << ',';
    }
    out << o.a << ',';
    out << (o.s ? format_double(*o.s) : std::string()) << ',';
    out << o.y << ',';
    out << (o.s_c ? format_double(*o.s_c) : std::string()) << ',';
    out << o.delta << ',' << format_double(o.pi) << '\n';
  }
}

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open output file: " + path);
  }
  out << "s1_star,h,n,reps,bias_truth,bias_smoothed,coverage_truth,coverage_smoothed,"
         "mean_se,sampling_sd,failures\n";
  for (const auto& r : rows) {
    out << format_double(r.s1_star) << ',' << format_double(r.h) << ',' << r.n << ','
        << r.reps << ',' << format_double(r.bias_truth) << ','
        << format_double(r.bias_smoothed) << ',' << format_double(r.coverage_truth) << ','
        << format_double(r.coverage_smoothed) << ',' << format_double(r.mean_se) << ','
        << format_double(r.sampling_sd) << ',' << r.failures << '\n';
  }
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str());
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::string section;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty() || key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
    }
    cfg.sections_[section][key] = Entry{value, false};
  }
  return cfg;
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return false;
  return s->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  auto k = s->second.find(key);
  if (k == s->second.end()) return fallback;
  k->second.consumed = true;
  return k->second.value;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  std::string v = get(section, key, "");
  if (v.empty()) return fallback;
  bool ok = false;
  double x = parse_number(v, ok);
  if (!ok) {
    throw ConfigError("config [" + section + "] " + key + ": not a number: '" + v + "'");
  }
  return x;
}

long Config::get_long(const std::string& section, const std::string& key, long fallback) const {
  double x = get_double(section, key, static_cast<double>(fallback));
  long r = static_cast<long>(x);
  if (static_cast<double>(r) != x) {
    throw ConfigError("config [" + section + "] " + key + ": not an integer");
  }
  return r;
}

std::vector<std::string> Config::get_list(const std::string& section,
                                          const std::string& key) const {
  std::string v = get(section, key, "");
  std::vector<std::string> out;
  if (v.empty()) return out;
  for (auto& item : split(v, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& section,
                                            const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(section, key)) {
    bool ok = false;
    double x = parse_number(item, ok);
    if (!ok) {
      throw ConfigError("config [" + section + "] " + key + ": not a number: '" + item + "'");
    }
    out.push_back(x);
  }
  return out;
}

void Config::override_value(const std::string& section, const std::string& key,
                            const std::string& value) {
  sections_[section][key] = Entry{value, false};
}

void Config::ensure_consumed() const {
  for (const auto& [section, keys] : sections_) {
    for (const auto& [key, entry] : keys) {
      if (!entry.consumed) {
        throw ConfigError("unknown config key: [" + section + "] " + key);
      }
    }
  }
}

// Inserts the separator a new value needs at the current position: nothing
// right after a key, a comma between container elements.
void JsonWriter::value_start() {
  if (pending_key_) {
    pending_key_ = false;
    return;
  }
  if (!first_.empty()) {
    if (!first_.back()) {
      out_ += ',';
    }
    first_.back() = false;
  }
}

JsonWriter& JsonWriter::begin_object() {
  value_start();
  out_ += '{';
  first_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  out_ += '}';
  first_.pop_back();
  return *this;
}

JsonWriter& JsonWriter::begin_array(const std::string& key) {
  if (!key.empty()) {
    raw_key(key);
  }
  value_start();
  out_ += '[';
  first_.push_back(true);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  out_ += ']';
  first_.pop_back();
  return *this;
}

JsonWriter& JsonWriter::raw_key(const std::string& key) {
  value_start();
  out_ += '"' + key + "\":";
  pending_key_ = true;
  return *this;
}

namespace {
std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string json_number(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
  return format_double(v);
}
}  // namespace

JsonWriter& JsonWriter::field(const std::string& key, const std::string& value) {
  raw_key(key);
  return element(value);
}

JsonWriter& JsonWriter::field(const std::string& key, double value) {
  raw_key(key);
  return element(value);
}

JsonWriter& JsonWriter::field(const std::string& key, long value) {
  raw_key(key);
  value_start();
  out_ += std::to_string(value);
  return *this;
}

JsonWriter& JsonWriter::field(const std::string& key, bool value) {
  raw_key(key);
  value_start();
  out_ += value ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::field_null(const std::string& key) {
  raw_key(key);
  value_start();
  out_ += "null";
  return *this;
}

JsonWriter& JsonWriter::element(double value) {
  value_start();
  out_ += json_number(value);
  return *this;
}

JsonWriter& JsonWriter::element(const std::string& value) {
  value_start();
  out_ += '"' + json_escape(value) + '"';
  return *this;
}

std::string contrast_kind_name(ContrastKind kind) {
  switch (kind) {
    case ContrastKind::log_relative_risk:
      return "log_relative_risk";
    case ContrastKind::vaccine_efficacy:
      return "vaccine_efficacy";
    case ContrastKind::risk_difference:
      return "risk_difference";
    case ContrastKind::raw_psi:
      return "raw_psi";
  }
  return "?";
}

ContrastKind contrast_kind_from_name(const std::string& name) {
  if (name == "log_relative_risk") return ContrastKind::log_relative_risk;
  if (name == "vaccine_efficacy") return ContrastKind::vaccine_efficacy;
  if (name == "risk_difference") return ContrastKind::risk_difference;
  if (name == "raw_psi") return ContrastKind::raw_psi;
  throw ConfigError("unknown contrast: " + name);
}

std::string report_json(const PsiEstimate& est, const ContrastReport* report,
                        ContrastKind kind, std::uint64_t seed) {
  JsonWriter w;
  w.begin_object();
  w.field("mode", estimator_mode_name(est.mode));
  w.field("contrast", contrast_kind_name(kind));
  if (report) {
    w.field("estimate", report->estimate);
    w.field("se", report->std_error);
    w.begin_array("ci").element(report->ci_lower).element(report->ci_upper).end_array();
    w.field("identifiability_failure", report->identifiability_failure);
    w.begin_array("gradient");
    for (int i = 0; i < 3; ++i) w.element(report->gradient[i]);
    w.end_array();
  } else {
    w.field_null("estimate");
    w.field_null("se");
    w.field_null("ci");
  }
  w.begin_array("psi");
  for (int i = 0; i < 3; ++i) w.element(est.psi[i]);
  w.end_array();
  w.begin_array("sigma");
  for (int i = 0; i < 3; ++i) {
    w.begin_array();
    for (int j = 0; j < 3; ++j) w.element(est.sigma(i, j));
    w.end_array();
  }
  w.end_array();
  w.begin_array("epsilons");
  for (int i = 0; i < 3; ++i) w.element(est.epsilons[i]);
  w.end_array();
  w.raw_key("diagnostics");
  w.begin_object();
  if (report) {
    w.field("eif_mean_max_abs", report->diagnostics.eif_mean_max_abs);
    w.field("min_eigenvalue_sigma", report->diagnostics.min_eigenvalue_sigma);
    w.field("denominator", report->diagnostics.denominator);
    if (report->diagnostics.psi4_hat) {
      w.field("psi4_hat", *report->diagnostics.psi4_hat);
    }
  }
  w.field("fluctuation_score_max_abs", est.fluctuation_score_max_abs);
  if (est.compatible_p2_le_p1) {
    w.field("compatible_p2_le_p1", *est.compatible_p2_le_p1);
  }
  w.end_object();
  if (est.bandwidth_used) {
    w.field("bandwidth", *est.bandwidth_used);
  } else {
    w.field_null("bandwidth");
  }
  w.field("seed", static_cast<long>(seed));
  w.begin_array("flags");
  for (const auto& f : est.flags) w.element(f);
  w.end_array();
  w.end_object();
  return w.str();
}

void write_influence_csv(const std::string& path, const PsiEstimate& est) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open output file: " + path);
  }
  out << "row,d1,d2,d3\n";
  for (Eigen::Index i = 0; i < est.influence_rows.rows(); ++i) {
    out << (i + 1) << ',' << format_double(est.influence_rows(i, 0)) << ','
        << format_double(est.influence_rows(i, 1)) << ','
        << format_double(est.influence_rows(i, 2)) << '\n';
  }
}

std::string error_json(const std::string& type, const std::string& message) {
  JsonWriter w;
  w.begin_object();
  w.raw_key("error");
  w.begin_object();
  w.field("type", type);
  w.field("message", message);
  w.end_object();
  w.end_object();
  return w.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open output file: " + path);
  }
  out << text << '\n';
}

}  // namespace pstmle
