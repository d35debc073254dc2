#pragma once

// Metrics files: the JSON written by evaluate/cococola/overlap and read back by
// report, plus a flat CSV view.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/error.hpp"
#include "cocola/format.hpp"
#include "cocola/language.hpp"
#include "cocola/matcher.hpp"
#include "cocola/metrics.hpp"

namespace cocola {

/// Which question ids a language result was computed over.
enum class Scope { full, filtered };

inline std::string_view to_string(Scope s) { return s == Scope::full ? "full" : "filtered"; }

inline std::optional<Scope> parse_scope(std::string_view s) {
  if (s == "full") return Scope::full;
  if (s == "filtered") return Scope::filtered;
  return std::nullopt;
}

struct LanguageResult {
  std::string model_tag;
  std::string variant;
  Scope scope = Scope::full;
  Membership membership = Membership::primary;
  CoCoColaReport report;
  std::map<std::string, std::size_t> label_counts;
  std::size_t incorrect = 0;
  std::size_t langid_checked = 0;
  std::size_t langid_disagreements = 0;
};

struct OverlapResult {
  std::string model_tag;
  std::string variant;
  OverlapMatrix matrix;
};

struct MetricsFile {
  std::string version;
  nlohmann::json provenance;
  std::vector<LanguageResult> languages;
  std::vector<OverlapResult> overlaps;
};

inline std::string_view to_string(Membership m) { return m == Membership::primary ? "primary" : "all_matches"; }

inline std::optional<Membership> parse_membership(std::string_view s) {
  if (s == "primary") return Membership::primary;
  if (s == "all_matches") return Membership::all_matches;
  return std::nullopt;
}

/// Correct sets and label tallies for one input language.
inline LanguageResult language_result(std::span<const Verdict> verdicts, const LanguageCode& input_language,
                                      const IdSet& universe, Scope scope, Membership membership,
                                      const LanguageCode& reference, const std::string& model_tag,
                                      const std::string& variant) {
  const CorrectSets sets = collect_sets(verdicts, universe, membership, reference, input_language);
  LanguageResult r;
  r.model_tag = model_tag;
  r.variant = variant;
  r.scope = scope;
  r.membership = membership;
  r.report = cococola_report(sets, model_tag);
  r.incorrect = sets.incorrect.size();
  for (auto l : {VerdictLabel::correct_input_lang, VerdictLabel::correct_english, VerdictLabel::correct_other,
                 VerdictLabel::incorrect}) {
    r.label_counts[std::string(to_string(l))] = 0;
  }
  for (const auto& v : verdicts) {
    ++r.label_counts[std::string(to_string(v.label))];
    if (v.langid && v.matched_language) ++r.langid_checked;
    if (v.langid_disagrees()) ++r.langid_disagreements;
  }
  return r;
}

namespace detail {

inline nlohmann::json ratio_to_json(const Ratio& r) {
  return {{"numerator", r.numerator},
          {"denominator", r.denominator},
          {"value", r.defined() ? nlohmann::json(*r.value()) : nlohmann::json(nullptr)}};
}

inline Ratio ratio_from_json(const nlohmann::json& j) {
  return {j.at("numerator").get<std::size_t>(), j.at("denominator").get<std::size_t>()};
}

}  // namespace detail

inline nlohmann::json to_json(const LanguageResult& r) {
  const auto& c = r.report;
  return {{"kind", "language"},
          {"model_tag", r.model_tag},
          {"variant", r.variant},
          {"scope", std::string(to_string(r.scope))},
          {"membership", std::string(to_string(r.membership))},
          {"input_language", c.input_language.str()},
          {"reference_language", c.reference_language.str()},
          {"universe", c.universe},
          {"counts",
           {{"input_language", c.count_input},
            {"reference_language", c.count_reference},
            {"other_languages", c.count_other},
            {"incorrect", r.incorrect}}},
          {"cococola_general", detail::ratio_to_json(c.ratio_general)},
          {"cococola_simplified",
           c.ratio_simplified ? detail::ratio_to_json(*c.ratio_simplified) : nlohmann::json(nullptr)},
          {"cumulative_accuracy", c.cumulative_accuracy},
          {"input_language_accuracy", c.input_language_accuracy},
          {"labels", r.label_counts},
          {"langid", {{"checked", r.langid_checked}, {"disagreements", r.langid_disagreements}}}};
}

inline nlohmann::json to_json(const OverlapResult& o) {
  std::vector<std::string> langs;
  for (const auto& l : o.matrix.languages) langs.push_back(l.str());
  return {{"kind", "overlap"},
          {"model_tag", o.model_tag},
          {"variant", o.variant},
          {"languages", langs},
          {"iou", o.matrix.iou},
          {"undefined", o.matrix.undefined},
          {"known_not_other", o.matrix.known_not_other}};
}

inline nlohmann::json to_json(const MetricsFile& f) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : f.languages) results.push_back(to_json(r));
  for (const auto& o : f.overlaps) results.push_back(to_json(o));
  return {{"version", f.version}, {"provenance", f.provenance}, {"results", results}};
}

inline MetricsFile metrics_from_json(const nlohmann::json& j, const std::string& source = "<metrics>") {
  MetricsFile f;
  try {
    f.version = j.at("version").get<std::string>();
    f.provenance = j.value("provenance", nlohmann::json::object());
    std::size_t index = 0;
    for (const auto& r : j.at("results")) {
      const ErrorContext ctx{source, {}, "results[" + std::to_string(index++) + "]"};
      const auto kind = r.at("kind").get<std::string>();
      if (kind == "language") {
        LanguageResult x;
        x.model_tag = r.at("model_tag").get<std::string>();
        x.variant = r.value("variant", std::string());
        auto scope = parse_scope(r.at("scope").get<std::string>());
        auto membership = parse_membership(r.value("membership", std::string("primary")));
        if (!scope || !membership) throw IngestError("unknown scope or membership", ctx);
        x.scope = *scope;
        x.membership = *membership;
        auto& c = x.report;
        c.model_tag = x.model_tag;
        c.input_language = LanguageCode::parse(r.at("input_language").get<std::string>());
        c.reference_language = LanguageCode::parse(r.at("reference_language").get<std::string>());
        c.universe = r.at("universe").get<std::size_t>();
        const auto& counts = r.at("counts");
        c.count_input = counts.at("input_language").get<std::size_t>();
        c.count_reference = counts.at("reference_language").get<std::size_t>();
        c.count_other = counts.at("other_languages").get<std::size_t>();
        x.incorrect = counts.value("incorrect", std::size_t{0});
        c.ratio_general = detail::ratio_from_json(r.at("cococola_general"));
        if (!r.at("cococola_simplified").is_null()) c.ratio_simplified = detail::ratio_from_json(r.at("cococola_simplified"));
        c.cumulative_accuracy = r.at("cumulative_accuracy").get<double>();
        c.input_language_accuracy = r.at("input_language_accuracy").get<double>();
        x.label_counts = r.value("labels", std::map<std::string, std::size_t>{});
        if (r.contains("langid")) {
          x.langid_checked = r["langid"].value("checked", std::size_t{0});
          x.langid_disagreements = r["langid"].value("disagreements", std::size_t{0});
        }
        f.languages.push_back(std::move(x));
      } else if (kind == "overlap") {
        OverlapResult o;
        o.model_tag = r.at("model_tag").get<std::string>();
        o.variant = r.value("variant", std::string());
        for (const auto& l : r.at("languages")) o.matrix.languages.push_back(LanguageCode::parse(l.get<std::string>()));
        o.matrix.iou = r.at("iou").get<std::vector<std::vector<double>>>();
        o.matrix.undefined = r.at("undefined").get<std::vector<std::vector<bool>>>();
        o.matrix.known_not_other = r.at("known_not_other").get<std::vector<std::vector<std::size_t>>>();
        f.overlaps.push_back(std::move(o));
      } else {
        throw IngestError("unknown result kind '" + kind + "'", ctx);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("invalid metrics file: ") + e.what(), ErrorContext{source, {}, {}});
  } catch (const PreconditionError& e) {
    throw IngestError(e.message(), ErrorContext{source, {}, {}});
  }
  return f;
}

inline MetricsFile read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open metrics file", ErrorContext{path.string(), {}, {}});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestError(std::string("metrics file is not valid JSON: ") + e.what(), ErrorContext{path.string(), {}, {}});
  }
  return metrics_from_json(j, path.string());
}

/// One row per language result.
inline void write_language_results_csv(std::ostream& out, std::span<const LanguageResult> results) {
  out << "model_tag,variant,scope,membership,input_language,reference_language,universe,count_input,"
         "count_reference,count_other,incorrect,cococola_general,cococola_simplified,cumulative_accuracy,"
         "input_language_accuracy,langid_disagreements\n";
  auto ratio = [](const Ratio& r) { return r.defined() ? format_full_precision(*r.value()) : std::string("undefined"); };
  for (const auto& r : results) {
    const auto& c = r.report;
    out << r.model_tag << ',' << r.variant << ',' << to_string(r.scope) << ',' << to_string(r.membership) << ','
        << c.input_language.str() << ',' << c.reference_language.str() << ',' << c.universe << ',' << c.count_input
        << ',' << c.count_reference << ',' << c.count_other << ',' << r.incorrect << ',' << ratio(c.ratio_general)
        << ',' << (c.ratio_simplified ? ratio(*c.ratio_simplified) : std::string("n/a")) << ','
        << format_full_precision(c.cumulative_accuracy) << ',' << format_full_precision(c.input_language_accuracy) << ','
        << r.langid_disagreements << '\n';
  }
}

/// Header row and first column list languages in matrix order.
inline void write_overlap_csv(std::ostream& out, const OverlapMatrix& m) {
  out << "language";
  for (const auto& l : m.languages) out << ',' << l.str();
  out << '\n';
  for (std::size_t a = 0; a < m.languages.size(); ++a) {
    out << m.languages[a].str();
    for (std::size_t b = 0; b < m.languages.size(); ++b) {
      out << ',' << (m.undefined[a][b] ? std::string("undefined") : format_full_precision(m.iou[a][b]));
    }
    out << '\n';
  }
}

/// Cell (a, b) is the number of ids correct in language a but not in b.
inline void write_known_csv(std::ostream& out, const OverlapMatrix& m) {
  out << "known_in\\unknown_in";
  for (const auto& l : m.languages) out << ',' << l.str();
  out << '\n';
  for (std::size_t a = 0; a < m.languages.size(); ++a) {
    out << m.languages[a].str();
    for (std::size_t b = 0; b < m.languages.size(); ++b) out << ',' << m.known_not_other[a][b];
    out << '\n';
  }
}

}  // namespace cocola
