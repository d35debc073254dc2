#pragma once

// Paper-style tables and figures: accuracy (PLM/SFT/Delta per language),
// Ratio/Acc per model and language with averages, overlap matrices and update
// heatmaps. Output formats are Markdown, CSV, JSON and SVG.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "cocola/checkpoint_diff.hpp"
#include "cocola/error.hpp"
#include "cocola/format.hpp"
#include "cocola/language.hpp"
#include "cocola/metrics.hpp"
#include "cocola/metrics_io.hpp"
#include "cocola/version.hpp"

namespace cocola {

inline constexpr std::string_view kMissingCell = "\xE2\x80\x94";  // rendered for undefined values

inline std::string display_name(const LanguageCode& l) {
  static const std::map<std::string, std::string> names{{"en", "English"}, {"fr", "French"},  {"de", "German"},
                                                        {"hi", "Hindi"},   {"it", "Italian"}, {"pt", "Portuguese"},
                                                        {"es", "Spanish"}};
  auto it = names.find(l.str());
  return it == names.end() ? l.str() : it->second;
}

// ---------- provenance ----------

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file for hashing", ErrorContext{path.string(), {}, {}});
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

/// {"version": ..., "inputs": [{"path": ..., "sha256": ...}]}, inputs in the given order.
inline nlohmann::json provenance_json(std::span<const std::filesystem::path> inputs) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : inputs) list.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
  return {{"version", kVersion}, {"inputs", list}};
}

// ---------- accuracy table ----------

/// Accuracies on the 0..100 scale.
struct AccuracyRow {
  std::string model;
  LanguageCode language;
  double plm = 0.0;
  double sft = 0.0;
};

struct AccuracyCell {
  double plm = 0.0;
  double sft = 0.0;
  double delta = 0.0;
};

struct AccuracyTable {
  std::vector<std::string> models;
  std::vector<LanguageCode> languages;
  std::map<std::pair<std::string, LanguageCode>, AccuracyCell> cells;

  const AccuracyCell* find(const std::string& model, const LanguageCode& l) const {
    auto it = cells.find({model, l});
    return it == cells.end() ? nullptr : &it->second;
  }
};

/// Models keep first-seen order; languages follow `order`, then any others in display order.
inline AccuracyTable render_accuracy_table(std::span<const AccuracyRow> rows,
                                           std::span<const LanguageCode> order = default_language_order()) {
  AccuracyTable t;
  std::vector<LanguageCode> seen;
  for (const auto& r : rows) {
    if (std::find(t.models.begin(), t.models.end(), r.model) == t.models.end()) t.models.push_back(r.model);
    if (std::find(seen.begin(), seen.end(), r.language) == seen.end()) seen.push_back(r.language);
    if (!t.cells.emplace(std::make_pair(r.model, r.language), AccuracyCell{r.plm, r.sft, delta_accuracy(r.plm, r.sft)})
             .second) {
      throw PreconditionError("duplicate accuracy row for " + r.model + "/" + r.language.str());
    }
  }
  for (const auto& l : order) {
    if (std::find(seen.begin(), seen.end(), l) != seen.end()) t.languages.push_back(l);
  }
  std::vector<LanguageCode> rest;
  for (const auto& l : seen) {
    if (std::find(t.languages.begin(), t.languages.end(), l) == t.languages.end()) rest.push_back(l);
  }
  for (const auto& l : in_display_order(rest)) t.languages.push_back(l);
  return t;
}

/// CSV with header model,language,plm,sft (further columns ignored).
inline std::vector<AccuracyRow> read_accuracy_csv(std::istream& in, const std::string& source = "<accuracy>") {
  std::vector<AccuracyRow> rows;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> column;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    const ErrorContext ctx{source, lineno, {}};
    if (column.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) column[cells[i]] = i;
      for (const char* key : {"model", "language", "plm", "sft"}) {
        if (!column.contains(key)) throw IngestError(std::string("missing column '") + key + "'", ctx);
      }
      continue;
    }
    auto cell = [&](const char* key) -> const std::string& {
      const std::size_t i = column.at(key);
      if (i >= cells.size()) throw IngestError(std::string("missing value for '") + key + "'", ctx);
      return cells[i];
    };
    AccuracyRow r;
    r.model = cell("model");
    if (!LanguageCode::valid(cell("language"))) throw IngestError("invalid language '" + cell("language") + "'", ctx);
    r.language = LanguageCode::parse(cell("language"));
    try {
      r.plm = std::stod(cell("plm"));
      r.sft = std::stod(cell("sft"));
    } catch (const std::exception&) {
      throw IngestError("non-numeric accuracy", ctx);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<AccuracyRow> read_accuracy_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open accuracy CSV", ErrorContext{path.string(), {}, {}});
  return read_accuracy_csv(in, path.string());
}

/// Pairs full-scope results tagged variant "plm" and "sft" for the same model and
/// input language; accuracy is the input-language accuracy.
inline std::vector<AccuracyRow> accuracy_rows_from_metrics(std::span<const LanguageResult> results) {
  std::map<std::pair<std::string, LanguageCode>, std::pair<std::optional<double>, std::optional<double>>> pairs;
  std::vector<std::pair<std::string, LanguageCode>> order;
  for (const auto& r : results) {
    if (r.scope != Scope::full || (r.variant != "plm" && r.variant != "sft")) continue;
    const auto key = std::make_pair(r.model_tag, r.report.input_language);
    if (!pairs.contains(key)) order.push_back(key);
    auto& slot = r.variant == "plm" ? pairs[key].first : pairs[key].second;
    slot = r.report.input_language_accuracy * 100.0;
  }
  std::vector<AccuracyRow> rows;
  for (const auto& key : order) {
    const auto& [plm, sft] = pairs[key];
    if (plm && sft) rows.push_back({key.first, key.second, *plm, *sft});
  }
  return rows;
}

inline void write_accuracy_markdown(std::ostream& out, const AccuracyTable& t) {
  out << "| Language |";
  for (const auto& m : t.models) out << ' ' << m << " PLM | " << m << " SFT | " << m << " Delta |";
  out << "\n|---|";
  for (std::size_t i = 0; i < t.models.size(); ++i) out << "---:|---:|---:|";
  out << '\n';
  for (const auto& l : t.languages) {
    out << "| " << display_name(l) << " |";
    for (const auto& m : t.models) {
      if (const auto* c = t.find(m, l)) {
        out << ' ' << format_percent(c->plm) << " | " << format_percent(c->sft) << " | " << format_percent(c->delta)
            << " |";
      } else {
        out << ' ' << kMissingCell << " | " << kMissingCell << " | " << kMissingCell << " |";
      }
    }
    out << '\n';
  }
}

inline void write_accuracy_csv(std::ostream& out, const AccuracyTable& t) {
  out << "model,language,plm,sft,delta\n";
  for (const auto& m : t.models) {
    for (const auto& l : t.languages) {
      if (const auto* c = t.find(m, l)) {
        out << m << ',' << l.str() << ',' << format_percent(c->plm) << ',' << format_percent(c->sft) << ','
            << format_percent(c->delta) << '\n';
      }
    }
  }
}

inline nlohmann::json accuracy_to_json(const AccuracyTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : t.models) {
    for (const auto& l : t.languages) {
      if (const auto* c = t.find(m, l)) {
        rows.push_back({{"model", m}, {"language", l.str()}, {"plm", c->plm}, {"sft", c->sft}, {"delta", c->delta}});
      }
    }
  }
  return rows;
}

// ---------- Ratio / Acc table ----------

struct CoColaEntry {
  std::string row;
  LanguageCode language;
  Ratio ratio;
  double accuracy = 0.0;  // fraction
};

struct CoColaCellText {
  std::string ratio;
  std::string accuracy;
};

struct CoColaTable {
  std::vector<std::string> rows;
  std::vector<LanguageCode> languages;
  std::map<std::pair<std::string, LanguageCode>, CoColaCellText> cells;
  std::map<std::string, CoColaCellText> averages;
};

namespace detail {

/// Mean of rendered two-decimal cells; the missing marker if any cell is missing.
inline std::string mean_of_rendered(const std::vector<std::string>& cells) {
  if (cells.empty()) return std::string(kMissingCell);
  double sum = 0.0;
  for (const auto& c : cells) {
    if (c == kMissingCell) return std::string(kMissingCell);
    sum += std::stod(c);
  }
  return format_percent(sum / static_cast<double>(cells.size()));
}

}  // namespace detail

inline CoColaTable render_cococola_table(std::span<const CoColaEntry> entries,
                                         std::span<const LanguageCode> order = default_language_order()) {
  CoColaTable t;
  std::vector<LanguageCode> seen;
  for (const auto& e : entries) {
    if (std::find(t.rows.begin(), t.rows.end(), e.row) == t.rows.end()) t.rows.push_back(e.row);
    if (std::find(seen.begin(), seen.end(), e.language) == seen.end()) seen.push_back(e.language);
    CoColaCellText cell{e.ratio.defined() ? format_fraction_as_percent(*e.ratio.value()) : std::string(kMissingCell),
                        format_fraction_as_percent(e.accuracy)};
    if (!t.cells.emplace(std::make_pair(e.row, e.language), cell).second) {
      throw PreconditionError("duplicate entry for " + e.row + "/" + e.language.str());
    }
  }
  for (const auto& l : order) {
    if (std::find(seen.begin(), seen.end(), l) != seen.end()) t.languages.push_back(l);
  }
  std::vector<LanguageCode> rest;
  for (const auto& l : seen) {
    if (std::find(t.languages.begin(), t.languages.end(), l) == t.languages.end()) rest.push_back(l);
  }
  for (const auto& l : in_display_order(rest)) t.languages.push_back(l);

  for (const auto& row : t.rows) {
    std::vector<std::string> ratios, accs;
    for (const auto& l : t.languages) {
      auto it = t.cells.find({row, l});
      ratios.push_back(it == t.cells.end() ? std::string(kMissingCell) : it->second.ratio);
      accs.push_back(it == t.cells.end() ? std::string(kMissingCell) : it->second.accuracy);
    }
    t.averages[row] = {detail::mean_of_rendered(ratios), detail::mean_of_rendered(accs)};
  }
  return t;
}

inline std::string result_row_label(const LanguageResult& r) {
  return r.variant.empty() ? r.model_tag : r.model_tag + " " + r.variant;
}

/// Non-reference language results of one scope; Acc is cumulative accuracy.
inline std::vector<CoColaEntry> cococola_entries_from_metrics(std::span<const LanguageResult> results, Scope scope) {
  std::vector<CoColaEntry> out;
  for (const auto& r : results) {
    if (r.scope != scope || r.report.input_language == r.report.reference_language) continue;
    out.push_back({result_row_label(r), r.report.input_language, r.report.ratio_general, r.report.cumulative_accuracy});
  }
  return out;
}

inline void write_cococola_markdown(std::ostream& out, const CoColaTable& t) {
  out << "| Model |";
  for (const auto& l : t.languages) out << ' ' << display_name(l) << " Ratio | " << display_name(l) << " Acc |";
  out << " Average Ratio | Average Acc |\n|---|";
  for (std::size_t i = 0; i <= t.languages.size(); ++i) out << "---:|---:|";
  out << '\n';
  for (const auto& row : t.rows) {
    out << "| " << row << " |";
    for (const auto& l : t.languages) {
      auto it = t.cells.find({row, l});
      if (it == t.cells.end()) {
        out << ' ' << kMissingCell << " | " << kMissingCell << " |";
      } else {
        out << ' ' << it->second.ratio << " | " << it->second.accuracy << " |";
      }
    }
    const auto& avg = t.averages.at(row);
    out << ' ' << avg.ratio << " | " << avg.accuracy << " |\n";
  }
}

inline void write_cococola_csv(std::ostream& out, const CoColaTable& t) {
  out << "model";
  for (const auto& l : t.languages) out << ',' << l.str() << "_ratio," << l.str() << "_acc";
  out << ",avg_ratio,avg_acc\n";
  for (const auto& row : t.rows) {
    out << row;
    for (const auto& l : t.languages) {
      auto it = t.cells.find({row, l});
      if (it == t.cells.end()) {
        out << ',' << kMissingCell << ',' << kMissingCell;
      } else {
        out << ',' << it->second.ratio << ',' << it->second.accuracy;
      }
    }
    const auto& avg = t.averages.at(row);
    out << ',' << avg.ratio << ',' << avg.accuracy << '\n';
  }
}

inline nlohmann::json cococola_table_to_json(const CoColaTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& l : t.languages) {
      auto it = t.cells.find({row, l});
      if (it != t.cells.end()) cells[l.str()] = {{"ratio", it->second.ratio}, {"acc", it->second.accuracy}};
    }
    const auto& avg = t.averages.at(row);
    rows.push_back({{"model", row}, {"cells", cells}, {"average", {{"ratio", avg.ratio}, {"acc", avg.accuracy}}}});
  }
  return rows;
}

// ---------- heatmaps ----------

struct Heatmap {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::optional<double>>> values;  // [row][col]
};

struct ColorScale {
  double min = 0.0;
  double max = 0.0;
};

inline Heatmap heatmap_from_diff(const DiffMatrix& m, std::string title) {
  Heatmap h;
  h.title = std::move(title);
  h.x_label = "layer (1-indexed)";
  h.y_label = "module";
  for (int l = 0; l < m.layer_count(); ++l) h.col_labels.push_back(std::to_string(l + 1));
  for (auto k : m.kinds()) {
    h.row_labels.emplace_back(to_string(k));
    std::vector<std::optional<double>> row;
    for (int l = 0; l < m.layer_count(); ++l) row.push_back(m.at(k, l));
    h.values.push_back(std::move(row));
  }
  return h;
}

inline Heatmap heatmap_from_overlap(const OverlapMatrix& m, std::string title) {
  Heatmap h;
  h.title = std::move(title);
  h.x_label = "language";
  h.y_label = "language";
  for (const auto& l : m.languages) {
    h.row_labels.push_back(l.str());
    h.col_labels.push_back(l.str());
  }
  for (std::size_t a = 0; a < m.languages.size(); ++a) {
    std::vector<std::optional<double>> row;
    for (std::size_t b = 0; b < m.languages.size(); ++b) {
      row.push_back(m.undefined[a][b] ? std::nullopt : std::optional<double>(m.iou[a][b]));
    }
    h.values.push_back(std::move(row));
  }
  return h;
}

inline std::optional<ColorScale> value_range(const Heatmap& h) {
  std::optional<ColorScale> out;
  for (const auto& row : h.values) {
    for (const auto& v : row) {
      if (!v) continue;
      if (!out) {
        out = ColorScale{*v, *v};
      } else {
        out->min = std::min(out->min, *v);
        out->max = std::max(out->max, *v);
      }
    }
  }
  return out;
}

inline std::optional<ColorScale> value_range(std::span<const Heatmap> maps) {
  std::optional<ColorScale> out;
  for (const auto& h : maps) {
    auto r = value_range(h);
    if (!r) continue;
    if (!out) {
      out = r;
    } else {
      out->min = std::min(out->min, r->min);
      out->max = std::max(out->max, r->max);
    }
  }
  return out;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

/// Position of v within the scale; 0 when the scale has no width.
inline double scale_position(double v, const ColorScale& s) {
  if (!(s.max > s.min)) return 0.0;
  return std::clamp((v - s.min) / (s.max - s.min), 0.0, 1.0);
}

inline constexpr std::array<int, 3> kLowColor{247, 251, 255};
inline constexpr std::array<int, 3> kHighColor{8, 48, 107};

inline std::string color_at(double t) {
  char buf[16];
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(kLowColor[i] + t * (kHighColor[i] - kLowColor[i])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

inline std::string annotate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace detail

/// Grid with columns on x, rows on y, each cell annotated with its value and a
/// vertical colorbar. Missing cells are hatched grey. Output bytes depend only
/// on the inputs.
inline std::string render_heatmap_svg(const Heatmap& h, std::optional<ColorScale> scale = std::nullopt) {
  if (h.row_labels.empty() || h.col_labels.empty()) throw PreconditionError("heatmap has no cells");
  const ColorScale s = scale ? *scale : value_range(h).value_or(ColorScale{});
  constexpr int cell_w = 56, cell_h = 28, left = 96, top = 48, bar_w = 16, gap = 24, bar_label_w = 72;
  const int cols = static_cast<int>(h.col_labels.size());
  const int rows = static_cast<int>(h.row_labels.size());
  const int grid_w = cols * cell_w, grid_h = rows * cell_h;
  const int width = left + grid_w + gap + bar_w + bar_label_w;
  const int height = top + grid_h + 48;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<defs><linearGradient id=\"bar\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
    << "<stop offset=\"0\" stop-color=\"" << detail::color_at(0.0) << "\"/>"
    << "<stop offset=\"1\" stop-color=\"" << detail::color_at(1.0) << "\"/></linearGradient></defs>\n";
  o << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  o << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << detail::xml_escape(h.title) << "</text>\n";
  for (int r = 0; r < rows; ++r) {
    const int y = top + r * cell_h;
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + cell_h / 2 + 4 << "\" text-anchor=\"end\">"
      << detail::xml_escape(h.row_labels[static_cast<std::size_t>(r)]) << "</text>\n";
    for (int c = 0; c < cols; ++c) {
      const int x = left + c * cell_w;
      const auto& v = h.values[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (!v) {
        o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w << "\" height=\"" << cell_h
          << "\" fill=\"#d9d9d9\" stroke=\"#ffffff\"/>\n";
        continue;
      }
      const double t = detail::scale_position(*v, s);
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w << "\" height=\"" << cell_h << "\" fill=\""
        << detail::color_at(t) << "\" stroke=\"#ffffff\"/>\n";
      o << "<text x=\"" << x + cell_w / 2 << "\" y=\"" << y + cell_h / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
        << (t > 0.55 ? "#ffffff" : "#000000") << "\">" << detail::annotate(*v) << "</text>\n";
    }
  }
  for (int c = 0; c < cols; ++c) {
    o << "<text x=\"" << left + c * cell_w + cell_w / 2 << "\" y=\"" << top + grid_h + 16
      << "\" text-anchor=\"middle\">" << detail::xml_escape(h.col_labels[static_cast<std::size_t>(c)]) << "</text>\n";
  }
  o << "<text x=\"" << left + grid_w / 2 << "\" y=\"" << top + grid_h + 36 << "\" text-anchor=\"middle\">"
    << detail::xml_escape(h.x_label) << "</text>\n";
  o << "<text x=\"14\" y=\"" << top + grid_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << top + grid_h / 2 << ")\">" << detail::xml_escape(h.y_label) << "</text>\n";
  const int bar_x = left + grid_w + gap;
  o << "<rect x=\"" << bar_x << "\" y=\"" << top << "\" width=\"" << bar_w << "\" height=\"" << grid_h
    << "\" fill=\"url(#bar)\" stroke=\"#000000\" stroke-width=\"0.5\"/>\n";
  o << "<text x=\"" << bar_x + bar_w + 4 << "\" y=\"" << top + 10 << "\">" << detail::annotate(s.max) << "</text>\n";
  o << "<text x=\"" << bar_x + bar_w + 4 << "\" y=\"" << top + grid_h << "\">" << detail::annotate(s.min)
    << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

// ---------- bundle ----------

enum class ReportFormat { md, csv, json, svg };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "md") return ReportFormat::md;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "svg") return ReportFormat::svg;
  return std::nullopt;
}

struct ReportBundle {
  std::optional<AccuracyTable> accuracy;
  std::optional<CoColaTable> cococola;
  std::string cococola_scope;
  std::vector<std::pair<std::string, OverlapMatrix>> overlaps;
  std::vector<std::pair<std::string, DiffMatrix>> heatmaps;
  nlohmann::json provenance = nlohmann::json::object();
};

namespace detail {

/// Letters, digits, '-', '_' and '.' survive; anything else becomes '_'.
inline std::string file_stem(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("unnamed") : out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text,
                       std::vector<std::filesystem::path>& written) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write report file", ErrorContext{path.string(), {}, {}});
  f << text;
  if (!f) throw Error("write failed", ErrorContext{path.string(), {}, {}});
  written.push_back(path);
}

inline void write_overlap_markdown(std::ostream& out, const OverlapMatrix& m) {
  out << "| |";
  for (const auto& l : m.languages) out << ' ' << l.str() << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < m.languages.size(); ++i) out << "---:|";
  out << '\n';
  for (std::size_t a = 0; a < m.languages.size(); ++a) {
    out << "| " << m.languages[a].str() << " |";
    for (std::size_t b = 0; b < m.languages.size(); ++b) {
      out << ' ' << (m.undefined[a][b] ? std::string(kMissingCell) : format_fraction_as_percent(m.iou[a][b])) << " |";
    }
    out << '\n';
  }
}

inline void write_diff_markdown(std::ostream& out, const DiffMatrix& m) {
  out << "| module |";
  for (int l = 0; l < m.layer_count(); ++l) out << ' ' << (l + 1) << " |";
  out << "\n|---|";
  for (int l = 0; l < m.layer_count(); ++l) out << "---:|";
  out << '\n';
  for (auto k : m.kinds()) {
    out << "| " << to_string(k) << " |";
    for (int l = 0; l < m.layer_count(); ++l) {
      auto v = m.at(k, l);
      out << ' ' << (v ? annotate(*v) : std::string(kMissingCell)) << " |";
    }
    out << '\n';
  }
}

}  // namespace detail

inline nlohmann::json report_to_json(const ReportBundle& b) {
  nlohmann::json j{{"version", kVersion}, {"provenance", b.provenance}};
  if (b.accuracy) j["accuracy"] = accuracy_to_json(*b.accuracy);
  if (b.cococola) j["cococola"] = {{"scope", b.cococola_scope}, {"rows", cococola_table_to_json(*b.cococola)}};
  nlohmann::json overlaps = nlohmann::json::array();
  for (const auto& [name, m] : b.overlaps) overlaps.push_back({{"name", name}, {"matrix", to_json(OverlapResult{name, {}, m})}});
  j["overlaps"] = overlaps;
  nlohmann::json heatmaps = nlohmann::json::array();
  for (const auto& [name, m] : b.heatmaps) {
    nlohmann::json rows = nlohmann::json::object();
    for (auto k : m.kinds()) {
      nlohmann::json row = nlohmann::json::array();
      for (int l = 0; l < m.layer_count(); ++l) {
        auto v = m.at(k, l);
        row.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
      }
      rows[std::string(to_string(k))] = row;
    }
    heatmaps.push_back({{"name", name}, {"layer_count", m.layer_count()}, {"rows", rows}});
  }
  j["heatmaps"] = heatmaps;
  return j;
}

/// Writes every requested format into `dir` and returns the files written.
/// SVG figures are always accompanied by their CSV data.
inline std::vector<std::filesystem::path> write_report(const ReportBundle& b, const std::set<ReportFormat>& formats,
                                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const bool csv = formats.contains(ReportFormat::csv);
  const bool svg = formats.contains(ReportFormat::svg);

  if (formats.contains(ReportFormat::md)) {
    std::ostringstream md;
    md << "# Report\n\n";
    if (b.accuracy) {
      md << "## Accuracy (PLM, SFT, Delta = SFT - PLM)\n\n";
      write_accuracy_markdown(md, *b.accuracy);
      md << '\n';
    }
    if (b.cococola) {
      md << "## CoCo-CoLa ratio and cumulative accuracy (" << b.cococola_scope << " scope)\n\n";
      write_cococola_markdown(md, *b.cococola);
      md << '\n';
    }
    for (const auto& [name, m] : b.overlaps) {
      md << "## Answer overlap (Jaccard, %): " << name << "\n\n";
      detail::write_overlap_markdown(md, m);
      md << '\n';
    }
    for (const auto& [name, m] : b.heatmaps) {
      md << "## Mean absolute update: " << name << "\n\n";
      detail::write_diff_markdown(md, m);
      md << '\n';
    }
    md << "## Provenance\n\n- version: " << kVersion << '\n';
    if (b.provenance.contains("inputs")) {
      for (const auto& in : b.provenance["inputs"]) {
        md << "- " << in.at("path").get<std::string>() << " sha256 " << in.at("sha256").get<std::string>() << '\n';
      }
    }
    detail::write_text(dir / "report.md", md.str(), written);
  }
  if (csv) {
    if (b.accuracy) {
      std::ostringstream s;
      write_accuracy_csv(s, *b.accuracy);
      detail::write_text(dir / "accuracy.csv", s.str(), written);
    }
    if (b.cococola) {
      std::ostringstream s;
      write_cococola_csv(s, *b.cococola);
      detail::write_text(dir / "cococola.csv", s.str(), written);
    }
  }
  if (csv || svg) {
    for (const auto& [name, m] : b.overlaps) {
      std::ostringstream s, k;
      write_overlap_csv(s, m);
      write_known_csv(k, m);
      detail::write_text(dir / ("overlap_" + detail::file_stem(name) + ".csv"), s.str(), written);
      detail::write_text(dir / ("known_" + detail::file_stem(name) + ".csv"), k.str(), written);
    }
    for (const auto& [name, m] : b.heatmaps) {
      std::ostringstream s;
      write_matrix_csv(s, m);
      detail::write_text(dir / ("heatmap_" + detail::file_stem(name) + ".csv"), s.str(), written);
    }
  }
  if (svg) {
    for (const auto& [name, m] : b.overlaps) {
      detail::write_text(dir / ("overlap_" + detail::file_stem(name) + ".svg"),
                         render_heatmap_svg(heatmap_from_overlap(m, "Answer overlap: " + name), ColorScale{0.0, 1.0}),
                         written);
    }
    std::vector<Heatmap> maps;
    for (const auto& [name, m] : b.heatmaps) {
      if (!m.empty()) maps.push_back(heatmap_from_diff(m, "Mean absolute update: " + name));
    }
    const auto global = value_range(std::span<const Heatmap>(maps));
    std::size_t i = 0;
    for (const auto& [name, m] : b.heatmaps) {
      if (m.empty()) continue;
      const Heatmap& h = maps[i++];
      const std::string stem = "heatmap_" + detail::file_stem(name);
      detail::write_text(dir / (stem + ".svg"), render_heatmap_svg(h), written);
      detail::write_text(dir / (stem + ".global.svg"), render_heatmap_svg(h, global), written);
    }
  }
  if (formats.contains(ReportFormat::json)) {
    detail::write_text(dir / "report.json", report_to_json(b).dump(2) + "\n", written);
  }
  return written;
}

}  // namespace cocola
