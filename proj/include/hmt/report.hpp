#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hmt/eval.hpp"
#include "json.hpp"

namespace hmt {

// Class names on the axis of a pairing: emotions for y, channel classes otherwise.
std::vector<std::string> class_names(const LabelSet& labels, LabelKind kind);

nlohmann::json metrics_to_json(const MetricsReport& metrics, const std::vector<std::string>& names);
nlohmann::json eval_report_to_json(const EvalReport& report, const LabelSet& labels);
nlohmann::json cv_summary_to_json(const CVSummary& summary, const LabelSet& labels);

// Rows per branch, columns y / y_face / y_body, each cell "balanced (unbalanced)"
// for F1 and accuracy.
struct TableRow {
  std::string method;
  Branch branch;
  std::vector<std::pair<LabelKind, MetricMeans>> cells;
};

std::vector<TableRow> table_rows(const CVSummary& summary);
std::vector<TableRow> table_rows(const EvalReport& report);
std::string format_table(const std::vector<TableRow>& rows, const LabelSet& labels);

std::string confusion_csv(const CountMatrix& counts, const std::vector<std::string>& names);
std::string confusion_normalized_csv(const CountMatrix& counts, const std::vector<std::string>& names);
std::string confusion_svg(const CountMatrix& counts, const std::vector<std::string>& names,
                          const std::string& title);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace hmt
