#pragma once

// CSV reports. Each file starts with a schema line ("# noiseopt-<kind> v1")
// followed by a header row. Numbers are printed with %.17g so the text
// round-trips to the same double.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace noiseopt {

inline constexpr int kReportSchemaVersion = 1;

struct MetricsRow {
  std::string model;       // preset / model id
  std::string evaluation;  // clean, fgsm, gaussian, transfer_fgsm, ...
  std::string family;      // clean | white_box | black_box
  std::string params;      // setting, e.g. "alpha=0.1"
  double accuracy = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct EpochRecord {
  std::uint32_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::vector<EpochRecord> curve;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

// Quotes a field when it contains a separator, quote or newline.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace detail

inline std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream o;
  o << "# noiseopt-metrics v" << kReportSchemaVersion << "\n";
  o << "model,evaluation,family,params,accuracy\n";
  for (const MetricsRow& row : r.rows) {
    o << detail::csv_field(row.model) << ',' << detail::csv_field(row.evaluation) << ','
      << detail::csv_field(row.family) << ',' << detail::csv_field(row.params) << ','
      << format_double(row.accuracy) << "\n";
  }
  return o.str();
}

inline std::string curve_csv(const MetricsReport& r) {
  std::ostringstream o;
  o << "# noiseopt-curve v" << kReportSchemaVersion << "\n";
  o << "epoch,train_loss,val_loss,test_accuracy\n";
  for (const EpochRecord& e : r.curve) {
    o << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
      << format_double(e.test_accuracy) << "\n";
  }
  return o.str();
}

inline void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path) {
  detail::write_text(path, metrics_csv(r));
}

inline void write_curve_csv(const MetricsReport& r, const std::filesystem::path& path) {
  detail::write_text(path, curve_csv(r));
}

}  // namespace noiseopt
