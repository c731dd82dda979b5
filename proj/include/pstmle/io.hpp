#pragma once

#include <map>
#include <string>

#include "pstmle/simulation.hpp"
#include "pstmle/two_phase.hpp"

namespace pstmle {

// 17-significant-digit formatting; round-trips doubles exactly.
std::string format_double(double x);

struct ColumnMap {
  std::vector<std::string> covariates;
  std::string arm = "a";
  std::string outcome = "y";
  std::string biomarker = "s";
  std::string crossover = "s_c";
  std::string delta = "delta";
  std::string pi = "pi";
};

// Parses a headered CSV into a validated dataset.  delta/pi columns are
// optional (single-phase defaults); empty and NA cells mark missing
// biomarkers.  Cell-level problems are collected into a row-indexed report
// before throwing.
Dataset ingest_csv(const std::string& path, const ColumnMap& columns, BiomarkerKind kind);

void write_dataset_csv(const std::string& path, const Dataset& d, const ColumnMap& columns);

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows);

// Sectioned key = value configuration text.  Unknown sections or keys are
// errors; every key the run consumes is checked off.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_long(const std::string& section, const std::string& key, long fallback) const;
  std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
  std::vector<double> get_double_list(const std::string& section, const std::string& key) const;

  void override_value(const std::string& section, const std::string& key,
                      const std::string& value);

  // Throws ConfigError naming any key never consumed.
  void ensure_consumed() const;

 private:
  struct Entry {
    std::string value;
    mutable bool consumed = false;
  };
  std::map<std::string, std::map<std::string, Entry>> sections_;
};

// Minimal JSON writer for the flat report/manifest schemas; numbers are
// emitted with 17 significant digits.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array(const std::string& key = "");
  JsonWriter& end_array();
  JsonWriter& field(const std::string& key, const std::string& value);
  JsonWriter& field(const std::string& key, double value);
  JsonWriter& field(const std::string& key, long value);
  JsonWriter& field(const std::string& key, bool value);
  JsonWriter& field_null(const std::string& key);
  JsonWriter& element(double value);
  JsonWriter& element(const std::string& value);
  JsonWriter& raw_key(const std::string& key);  // for nested containers

  std::string str() const { return out_; }

 private:
  void value_start();
  std::string out_;
  std::vector<bool> first_;
  bool pending_key_ = false;
};

std::string contrast_kind_name(ContrastKind kind);
ContrastKind contrast_kind_from_name(const std::string& name);

// JSON estimate report: {estimate, se, ci, psi, sigma, epsilons,
// diagnostics, bandwidth, mode, seed, flags}.
std::string report_json(const PsiEstimate& est, const ContrastReport* report,
                        ContrastKind kind, std::uint64_t seed);

void write_influence_csv(const std::string& path, const PsiEstimate& est);

std::string error_json(const std::string& type, const std::string& message);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace pstmle
