#include "hmt/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"

namespace hmt {

using nlohmann::json;

std::vector<std::string> class_names(const LabelSet& labels, LabelKind kind) {
  if (kind == LabelKind::Whole) return labels.emotions();
  std::vector<std::string> out;
  for (ClassId c = 0; c < labels.channel_count(); ++c) out.push_back(labels.channel_name(c));
  return out;
}

namespace {

json means_json(const MetricMeans& m) {
  return json{{"balanced_accuracy", m.balanced_accuracy},
              {"unbalanced_accuracy", m.unbalanced_accuracy},
              {"balanced_f1", m.balanced_f1},
              {"unbalanced_f1", m.unbalanced_f1}};
}

MetricMeans means_of(const MetricsReport& m) {
  return {m.balanced_accuracy, m.unbalanced_accuracy, m.balanced_f1, m.unbalanced_f1};
}

json per_class(const std::vector<double>& values, const std::vector<std::string>& names) {
  json out = json::object();
  for (std::size_t i = 0; i < values.size() && i < names.size(); ++i) out[names[i]] = values[i];
  return out;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

json metrics_to_json(const MetricsReport& m, const std::vector<std::string>& names) {
  json doc = means_json(means_of(m));
  doc["samples"] = m.samples;
  doc["face_absent"] = m.face_absent;
  doc["classes"] = names;
  doc["recall"] = per_class(m.recall, names);
  doc["precision"] = per_class(m.precision, names);
  doc["f1"] = per_class(m.f1, names);
  doc["support"] = m.support;
  doc["confusion"] = m.confusion;
  return doc;
}

json eval_report_to_json(const EvalReport& report, const LabelSet& labels) {
  json doc;
  doc["method"] = std::string(method_name(report.method));
  doc["samples"] = report.samples;
  doc["face_absent"] = report.face_absent;
  doc["label_set"] = label_set_json(labels);
  json pairings = json::array();
  for (const auto& p : report.pairings) {
    json entry = metrics_to_json(p.metrics, class_names(labels, p.pairing.labels));
    entry["key"] = pairing_key(p.pairing);
    entry["branch"] = std::string(branch_name(p.pairing.branch));
    entry["labels"] = std::string(label_kind_name(p.pairing.labels));
    pairings.push_back(std::move(entry));
  }
  doc["pairings"] = std::move(pairings);
  return doc;
}

json cv_summary_to_json(const CVSummary& summary, const LabelSet& labels) {
  json doc;
  doc["method"] = std::string(method_name(summary.method));
  doc["frame_level"] = summary.frame_level;
  doc["folds"] = summary.folds;
  doc["iterations"] = summary.iterations;
  doc["training_runs"] = summary.runs.size();
  doc["label_set"] = label_set_json(labels);
  json pairings = json::array();
  for (const auto& s : summary.pairings) {
    const auto names = class_names(labels, s.pairing.labels);
    json entry;
    entry["key"] = pairing_key(s.pairing);
    entry["branch"] = std::string(branch_name(s.pairing.branch));
    entry["labels"] = std::string(label_kind_name(s.pairing.labels));
    entry["classes"] = names;
    entry["runs"] = s.runs;
    entry["mean"] = means_json(s.mean);
    entry["mean_recall"] = per_class(s.mean_recall, names);
    entry["pooled_confusion"] = s.pooled_confusion;
    pairings.push_back(std::move(entry));
  }
  doc["pairings"] = std::move(pairings);
  json runs = json::array();
  for (const auto& run : summary.runs) {
    json entry;
    entry["iteration"] = run.iteration;
    entry["fold"] = run.fold;
    entry["test_subjects"] = run.test_subjects;
    entry["samples"] = run.report.samples;
    entry["face_absent"] = run.report.face_absent;
    json metrics = json::object();
    for (const auto& p : run.report.pairings) metrics[pairing_key(p.pairing)] = means_json(means_of(p.metrics));
    entry["metrics"] = std::move(metrics);
    runs.push_back(std::move(entry));
  }
  doc["runs"] = std::move(runs);
  return doc;
}

namespace {

template <typename Source>
std::vector<TableRow> rows_from(Method method, const Source& entries) {
  std::vector<TableRow> rows;
  for (const auto& e : entries) {
    TableRow* row = nullptr;
    for (auto& r : rows) {
      if (r.branch == e.first.branch) row = &r;
    }
    if (!row) {
      rows.push_back({std::string(method_name(method)), e.first.branch, {}});
      row = &rows.back();
    }
    row->cells.emplace_back(e.first.labels, e.second);
  }
  return rows;
}

}  // namespace

std::vector<TableRow> table_rows(const CVSummary& summary) {
  std::vector<std::pair<Pairing, MetricMeans>> entries;
  for (const auto& s : summary.pairings) entries.emplace_back(s.pairing, s.mean);
  return rows_from(summary.method, entries);
}

std::vector<TableRow> table_rows(const EvalReport& report) {
  std::vector<std::pair<Pairing, MetricMeans>> entries;
  for (const auto& p : report.pairings) entries.emplace_back(p.pairing, means_of(p.metrics));
  return rows_from(report.method, entries);
}

std::string format_table(const std::vector<TableRow>& rows, const LabelSet& labels) {
  const bool channels = labels.has_neutral();
  std::vector<LabelKind> kinds{LabelKind::Whole};
  if (channels) {
    kinds.push_back(LabelKind::Face);
    kinds.push_back(LabelKind::Body);
  }
  auto header_for = [&](LabelKind k) {
    const std::size_t n = k == LabelKind::Whole ? labels.emotion_count() : labels.channel_count();
    return std::string(label_kind_name(k)) + " (" + std::to_string(n) + " classes)";
  };
  auto branch_label = [](Branch b) -> std::string {
    switch (b) {
      case Branch::Body: return "Body br.";
      case Branch::Face: return "Face br.";
      case Branch::Whole: return "Whole body br.";
      case Branch::Fusion: return "Fusion";
      case Branch::SumFusion: return "Sum Fusion";
    }
    return "?";
  };

  char buf[256];
  std::ostringstream out;
  std::snprintf(buf, sizeof buf, "%-10s %-15s", "Method", "Branch");
  out << buf;
  for (LabelKind k : kinds) {
    std::snprintf(buf, sizeof buf, " | %-27s", header_for(k).c_str());
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof buf, "%-10s %-15s", "", "");
  out << buf;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    std::snprintf(buf, sizeof buf, " | %-13s %-13s", "F1", "ACC");
    out << buf;
  }
  out << "\n";
  for (const TableRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %-15s", row.method.c_str(), branch_label(row.branch).c_str());
    out << buf;
    for (LabelKind k : kinds) {
      std::string f1 = "-";
      std::string acc = "-";
      for (const auto& [kind, m] : row.cells) {
        if (kind != k) continue;
        f1 = fixed2(m.balanced_f1) + " (" + fixed2(m.unbalanced_f1) + ")";
        acc = fixed2(m.balanced_accuracy) + " (" + fixed2(m.unbalanced_accuracy) + ")";
      }
      std::snprintf(buf, sizeof buf, " | %-13s %-13s", f1.c_str(), acc.c_str());
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string confusion_csv(const CountMatrix& counts, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out << names.at(i);
    for (std::size_t v : counts[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

std::string confusion_normalized_csv(const CountMatrix& counts, const std::vector<std::string>& names) {
  const ConfusionMatrix m = normalize_rows(counts);
  std::ostringstream out;
  out.precision(17);
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < m.normalized.size(); ++i) {
    out << names.at(i);
    for (double v : m.normalized[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

std::string confusion_svg(const CountMatrix& counts, const std::vector<std::string>& names,
                          const std::string& title) {
  const ConfusionMatrix m = normalize_rows(counts);
  const std::size_t n = counts.size();
  constexpr int cell = 52;
  constexpr int left = 120;
  constexpr int top = 130;
  const int width = left + static_cast<int>(n) * cell + 20;
  const int height = top + static_cast<int>(n) * cell + 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m.normalized[i][j];
      const int r = static_cast<int>(255.0 - (255.0 - 33.0) * v);
      const int g = static_cast<int>(255.0 - (255.0 - 102.0) * v);
      const int b = static_cast<int>(255.0 - (255.0 - 172.0) * v);
      const int x = left + static_cast<int>(j) * cell;
      const int y = top + static_cast<int>(i) * cell;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\" stroke=\"#999\"/>\n";
      svg << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (v > 0.5 ? "white" : "black") << "\">" << fixed2(v)
          << "</text>\n";
    }
    const int y = top + static_cast<int>(i) * cell + cell / 2 + 4;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y << "\" text-anchor=\"end\">" << names.at(i)
        << "</text>\n";
    const int x = left + static_cast<int>(i) * cell + cell / 2;
    svg << "<text x=\"" << x << "\" y=\"" << top - 6 << "\" text-anchor=\"start\" transform=\"rotate(-45 " << x
        << ' ' << top - 6 << ")\">" << names.at(i) << "</text>\n";
  }
  svg << "<text x=\"" << left + static_cast<int>(n) * cell / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">predicted</text>\n";
  svg << "<text x=\"16\" y=\"" << top + static_cast<int>(n) * cell / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + static_cast<int>(n) * cell / 2
      << ")\">true</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace hmt
