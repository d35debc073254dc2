#pragma once

// Parallel closed-book QA corpus: JSONL ingestion, validation and the
// reference-language filtered subset.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/error.hpp"
#include "cocola/language.hpp"
#include "cocola/normalize.hpp"

namespace cocola {

using IdSet = std::set<std::string>;

enum class Split { train, validation, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct QAItem {
  std::string question_id;
  LanguageCode language;
  std::string question;
  std::string answer;
  Split split = Split::train;
};

enum class PartialRowPolicy { strict, quarantine };

struct IngestOptions {
  /// Declared language set; empty means "every code seen in the file".
  std::vector<LanguageCode> languages;
  PartialRowPolicy partial_rows = PartialRowPolicy::strict;
  Split evaluation_split = Split::test;
  NormalizeOptions normalize;
};

struct IngestWarning {
  std::string question_id;
  LanguageCode language;
  std::string message;
};

/// Fully parallel view of the corpus: every retained question id carries one
/// item per declared language. Immutable once built.
class ParallelCorpus {
 public:
  struct Row {
    Split split = Split::train;
    std::map<LanguageCode, QAItem> items;
  };

  ParallelCorpus() = default;
  ParallelCorpus(std::vector<LanguageCode> languages, std::map<std::string, Row> rows, Split evaluation_split,
                 std::vector<std::string> quarantined = {}, std::vector<IngestWarning> warnings = {})
      : languages_(std::move(languages)),
        rows_(std::move(rows)),
        evaluation_split_(evaluation_split),
        quarantined_(std::move(quarantined)),
        warnings_(std::move(warnings)) {}

  const std::vector<LanguageCode>& languages() const noexcept { return languages_; }
  bool has_language(const LanguageCode& l) const {
    return std::find(languages_.begin(), languages_.end(), l) != languages_.end();
  }

  const std::map<std::string, Row>& rows() const noexcept { return rows_; }
  std::size_t question_count() const noexcept { return rows_.size(); }
  std::size_t item_count() const noexcept { return rows_.size() * languages_.size(); }

  const QAItem* find(const std::string& id, const LanguageCode& l) const {
    auto r = rows_.find(id);
    if (r == rows_.end()) return nullptr;
    auto it = r->second.items.find(l);
    return it == r->second.items.end() ? nullptr : &it->second;
  }

  const QAItem& item(const std::string& id, const LanguageCode& l) const {
    if (const QAItem* p = find(id, l)) return *p;
    throw PreconditionError("no item for language " + l.str(), ErrorContext{{}, {}, id});
  }

  std::optional<Split> split_of(const std::string& id) const {
    auto r = rows_.find(id);
    if (r == rows_.end()) return std::nullopt;
    return r->second.split;
  }

  IdSet ids(Split split) const {
    IdSet out;
    for (const auto& [id, row] : rows_) {
      if (row.split == split) out.insert(id);
    }
    return out;
  }

  Split evaluation_split() const noexcept { return evaluation_split_; }
  IdSet evaluation_ids() const { return ids(evaluation_split_); }
  bool in_evaluation_split(const std::string& id) const {
    auto s = split_of(id);
    return s && *s == evaluation_split_;
  }

  const std::vector<std::string>& quarantined() const noexcept { return quarantined_; }
  const std::vector<IngestWarning>& warnings() const noexcept { return warnings_; }

 private:
  std::vector<LanguageCode> languages_;
  std::map<std::string, Row> rows_;
  Split evaluation_split_ = Split::test;
  std::vector<std::string> quarantined_;
  std::vector<IngestWarning> warnings_;
};

namespace detail {

inline std::string required_string(const nlohmann::json& obj, const char* key, const ErrorContext& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) throw IngestError(std::string("missing key '") + key + "'", ctx);
  if (!it->is_string()) throw IngestError(std::string("key '") + key + "' must be a string", ctx);
  return it->get<std::string>();
}

/// Flags answers written in a script other than the one expected for the row's language.
inline std::optional<std::string> script_warning(const LanguageCode& l, std::string_view answer) {
  const ScriptProfile p = script_profile(answer);
  if (p.letters == 0) return std::nullopt;
  if (l == lang::hi) {
    if (p.devanagari_share() <= 0.5) return "answer is not predominantly Devanagari";
    return std::nullopt;
  }
  static const std::vector<LanguageCode> latin{lang::en, lang::fr, lang::de, lang::it, lang::pt, lang::es};
  if (std::find(latin.begin(), latin.end(), l) != latin.end() && p.latin_share() <= 0.5) {
    return p.devanagari > 0 ? "answer contains Devanagari script" : "answer is not predominantly Latin script";
  }
  return std::nullopt;
}

}  // namespace detail

/// Reads a corpus from a JSONL stream. `source` names the stream in errors.
inline ParallelCorpus ingest_corpus(std::istream& in, const IngestOptions& options = {},
                                    const std::string& source = "<corpus>") {
  std::set<LanguageCode> declared(options.languages.begin(), options.languages.end());
  std::set<LanguageCode> seen;
  std::map<std::string, ParallelCorpus::Row> rows;
  std::map<std::string, std::size_t> first_line;
  std::vector<IngestWarning> warnings;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ErrorContext ctx{source, lineno, {}};

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(std::string("malformed JSON: ") + e.what(), ctx);
    }
    if (!obj.is_object()) throw IngestError("line is not a JSON object", ctx);

    QAItem item;
    item.question_id = detail::required_string(obj, "question_id", ctx);
    ctx.item = item.question_id;
    if (item.question_id.empty()) throw IngestError("empty question_id", ctx);
    const std::string code = detail::required_string(obj, "language", ctx);
    if (!LanguageCode::valid(code)) throw IngestError("invalid language code '" + code + "'", ctx);
    item.language = LanguageCode::parse(code);
    if (!declared.empty() && !declared.contains(item.language)) {
      throw IngestError("undeclared language '" + code + "'", ctx);
    }
    const std::string split = detail::required_string(obj, "split", ctx);
    auto parsed_split = parse_split(split);
    if (!parsed_split) throw IngestError("unknown split '" + split + "'", ctx);
    item.split = *parsed_split;
    item.question = detail::required_string(obj, "question", ctx);
    item.answer = detail::required_string(obj, "answer", ctx);
    if (normalize(item.question, options.normalize).empty()) throw IngestError("question is empty after normalization", ctx);
    if (normalize(item.answer, options.normalize).empty()) throw IngestError("answer is empty after normalization", ctx);

    auto [row_it, inserted] = rows.try_emplace(item.question_id);
    auto& row = row_it->second;
    if (inserted) {
      row.split = item.split;
      first_line[item.question_id] = lineno;
    } else if (row.split != item.split) {
      throw IngestError("question id appears in splits '" + std::string(to_string(row.split)) + "' and '" + split +
                            "' (first seen on line " + std::to_string(first_line[item.question_id]) + ")",
                        ctx);
    }
    if (row.items.contains(item.language)) {
      throw IngestError("duplicate (question_id, language, split) = (" + item.question_id + ", " + code + ", " +
                            split + ")",
                        ctx);
    }
    if (auto w = detail::script_warning(item.language, item.answer)) {
      warnings.push_back({item.question_id, item.language, *w});
    }
    seen.insert(item.language);
    row.items.emplace(item.language, std::move(item));
  }

  std::vector<LanguageCode> languages =
      options.languages.empty() ? in_display_order({seen.begin(), seen.end()}) : in_display_order(options.languages);

  std::vector<std::string> quarantined;
  for (auto it = rows.begin(); it != rows.end();) {
    std::vector<std::string> missing;
    for (const auto& l : languages) {
      if (!it->second.items.contains(l)) missing.push_back(l.str());
    }
    if (missing.empty()) {
      ++it;
      continue;
    }
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ",") + m;
    if (options.partial_rows == PartialRowPolicy::strict) {
      throw IngestError("question is missing languages: " + list,
                        ErrorContext{source, first_line[it->first], it->first});
    }
    quarantined.push_back(it->first);
    it = rows.erase(it);
  }
  std::erase_if(warnings, [&](const IngestWarning& w) {
    return std::find(quarantined.begin(), quarantined.end(), w.question_id) != quarantined.end();
  });

  return ParallelCorpus(std::move(languages), std::move(rows), options.evaluation_split, std::move(quarantined),
                        std::move(warnings));
}

inline ParallelCorpus ingest_corpus(const std::filesystem::path& path, const IngestOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open corpus file", ErrorContext{path.string(), {}, {}});
  return ingest_corpus(in, options, path.string());
}

/// Evaluation-split questions whose normalized gold answers differ between
/// the input language and the reference language.
struct FilteredSubset {
  LanguageCode input_language;
  LanguageCode reference_language;
  IdSet question_ids;
};

inline FilteredSubset build_filtered_subset(const ParallelCorpus& corpus, const LanguageCode& input_language,
                                            const LanguageCode& reference_language = lang::en,
                                            const NormalizeOptions& normalize_options = {}) {
  if (input_language == reference_language) {
    throw PreconditionError("filtered subset is undefined for the reference language " + reference_language.str());
  }
  if (!corpus.has_language(input_language)) {
    throw PreconditionError("language " + input_language.str() + " is not in the corpus");
  }
  if (!corpus.has_language(reference_language)) {
    throw PreconditionError("reference language " + reference_language.str() + " is not in the corpus");
  }
  const IdSet eval = corpus.evaluation_ids();
  if (eval.empty()) throw PreconditionError("evaluation split is empty");

  FilteredSubset out{input_language, reference_language, {}};
  for (const auto& id : eval) {
    const auto& a = corpus.item(id, input_language).answer;
    const auto& b = corpus.item(id, reference_language).answer;
    if (normalize(a, normalize_options) != normalize(b, normalize_options)) out.question_ids.insert(id);
  }
  return out;
}

}  // namespace cocola
