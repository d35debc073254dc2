#pragma once

// Answer matching: decides whether a generated answer is correct and in which
// language, and groups verdicts into per-output-language correct sets.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/corpus.hpp"
#include "cocola/error.hpp"
#include "cocola/langid.hpp"
#include "cocola/language.hpp"
#include "cocola/normalize.hpp"

namespace cocola {

struct GenerationRecord {
  std::string question_id;
  LanguageCode input_language;
  std::string output;
  std::string model_tag;
  /// 1-based line in the log this record was read from (0 if constructed in memory).
  std::size_t line = 0;
};

enum class VerdictLabel { correct_input_lang, correct_english, correct_other, incorrect };

inline std::string_view to_string(VerdictLabel l) {
  switch (l) {
    case VerdictLabel::correct_input_lang: return "correct_input_lang";
    case VerdictLabel::correct_english: return "correct_english";
    case VerdictLabel::correct_other: return "correct_other";
    case VerdictLabel::incorrect: return "incorrect";
  }
  return "?";
}

struct Verdict {
  std::string question_id;
  LanguageCode input_language;
  std::string model_tag;
  VerdictLabel label = VerdictLabel::incorrect;
  /// Language of the gold answer that decided the label.
  std::optional<LanguageCode> matched_language;
  std::string matched_answer;
  /// Every language whose normalized gold answer equals the candidate, in priority order.
  std::vector<LanguageCode> matched_languages;
  std::string raw_output;
  /// First line of the output, cut at the first sentence terminator.
  std::string candidate;
  std::optional<LangIdResult> langid;

  bool correct() const noexcept { return label != VerdictLabel::incorrect; }
  /// True when langid confidently names a language other than the matched one.
  bool langid_disagrees() const {
    return matched_language && langid && langid->predicted && *langid->predicted != *matched_language;
  }
};

struct MatcherOptions {
  NormalizeOptions normalize;
  LanguageCode reference_language = lang::en;
  LangIdOptions langid;
};

/// First line of `output`, truncated before the first sentence terminator
/// that is followed by whitespace or ends the line.
inline std::string first_sentence(std::string_view output) {
  auto nl = output.find_first_of("\r\n");
  std::string_view line = output.substr(0, nl);
  static const std::vector<std::string_view> terminators{".", "!", "?", "\xE0\xA5\xA4" /* danda */,
                                                         "\xE3\x80\x82" /* ideographic full stop */};
  std::size_t cut = line.size();
  for (auto t : terminators) {
    std::size_t pos = 0;
    while ((pos = line.find(t, pos)) != std::string_view::npos) {
      const std::size_t after = pos + t.size();
      if (after == line.size() || line[after] == ' ' || line[after] == '\t') {
        cut = std::min(cut, pos);
        break;
      }
      pos = after;
    }
  }
  return std::string(line.substr(0, cut));
}

/// Exact match after normalization against gold answers, priority: input
/// language, reference language, remaining corpus languages in display order.
inline Verdict judge(const GenerationRecord& record, const ParallelCorpus& corpus, const ProfileSet* profiles,
                     const MatcherOptions& options = {}) {
  if (!corpus.split_of(record.question_id)) {
    throw PreconditionError("unknown question id", ErrorContext{{}, {}, record.question_id});
  }
  if (!corpus.in_evaluation_split(record.question_id)) {
    throw PreconditionError("question id is not in the evaluation split", ErrorContext{{}, {}, record.question_id});
  }
  if (!corpus.has_language(record.input_language)) {
    throw PreconditionError("input language " + record.input_language.str() + " is not in the corpus",
                            ErrorContext{{}, {}, record.question_id});
  }

  Verdict v;
  v.question_id = record.question_id;
  v.input_language = record.input_language;
  v.model_tag = record.model_tag;
  v.raw_output = record.output;
  v.candidate = first_sentence(record.output);
  const std::string normalized = normalize(v.candidate, options.normalize);

  std::vector<LanguageCode> priority{record.input_language};
  if (corpus.has_language(options.reference_language) && options.reference_language != record.input_language) {
    priority.push_back(options.reference_language);
  }
  for (const auto& l : corpus.languages()) {
    if (std::find(priority.begin(), priority.end(), l) == priority.end()) priority.push_back(l);
  }

  if (!normalized.empty()) {
    for (const auto& l : priority) {
      const QAItem& gold = corpus.item(record.question_id, l);
      if (normalize(gold.answer, options.normalize) != normalized) continue;
      v.matched_languages.push_back(l);
      if (v.matched_language) continue;
      v.matched_language = l;
      v.matched_answer = gold.answer;
      if (l == record.input_language) {
        v.label = VerdictLabel::correct_input_lang;
      } else if (l == options.reference_language) {
        v.label = VerdictLabel::correct_english;
      } else {
        v.label = VerdictLabel::correct_other;
      }
    }
  }

  if (profiles != nullptr && !profiles->empty()) {
    std::vector<LanguageCode> candidates;
    for (const auto& l : corpus.languages()) {
      if (profiles->contains(l)) candidates.push_back(l);
    }
    if (!candidates.empty() && !langid_normalize(v.candidate).empty()) {
      v.langid = classify(v.candidate, candidates, *profiles, options.langid);
    }
  }
  return v;
}

/// How correct verdicts populate the per-output-language sets.
enum class Membership {
  /// Each correct id joins the set of its deciding language only (a partition).
  primary,
  /// Each correct id joins the set of every language whose gold answer it matches.
  all_matches,
};

/// The family C_{Li->Lo} for one input language over a universe of ids.
struct CorrectSets {
  LanguageCode input_language;
  LanguageCode reference_language = lang::en;
  std::map<LanguageCode, IdSet> by_output;
  IdSet universe;
  /// Universe ids with an incorrect verdict or no verdict at all.
  IdSet incorrect;

  const IdSet& of(const LanguageCode& l) const {
    static const IdSet empty;
    auto it = by_output.find(l);
    return it == by_output.end() ? empty : it->second;
  }

  /// Union of the correct sets of every output language other than the input.
  IdSet other_languages() const {
    IdSet out;
    for (const auto& [l, ids] : by_output) {
      if (l != input_language) out.insert(ids.begin(), ids.end());
    }
    return out;
  }
};

inline CorrectSets collect_sets(std::span<const Verdict> verdicts, const IdSet& universe,
                                Membership membership = Membership::primary,
                                const LanguageCode& reference_language = lang::en,
                                std::optional<LanguageCode> input_language = std::nullopt) {
  CorrectSets sets;
  sets.universe = universe;
  sets.reference_language = reference_language;
  if (input_language) sets.input_language = *input_language;
  IdSet seen;
  for (const auto& v : verdicts) {
    if (seen.empty() && !input_language) {
      sets.input_language = v.input_language;
    } else if (v.input_language != sets.input_language) {
      throw PreconditionError("verdicts mix input languages " + sets.input_language.str() + " and " +
                                  v.input_language.str(),
                              ErrorContext{{}, {}, v.question_id});
    }
    if (!universe.contains(v.question_id)) {
      throw PreconditionError("verdict id outside the universe", ErrorContext{{}, {}, v.question_id});
    }
    if (!seen.insert(v.question_id).second) {
      throw PreconditionError("duplicate verdict", ErrorContext{{}, {}, v.question_id});
    }
    if (!v.correct()) continue;
    if (membership == Membership::primary) {
      sets.by_output[*v.matched_language].insert(v.question_id);
    } else {
      for (const auto& l : v.matched_languages) sets.by_output[l].insert(v.question_id);
    }
  }
  for (const auto& id : universe) {
    bool correct = false;
    for (const auto& [l, ids] : sets.by_output) correct = correct || ids.contains(id);
    if (!correct) sets.incorrect.insert(id);
  }
  return sets;
}

// ---------- generation logs and verdict export ----------

inline std::vector<GenerationRecord> read_generation_log(std::istream& in, const std::string& source = "<log>") {
  std::vector<GenerationRecord> out;
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
    GenerationRecord r;
    r.line = lineno;
    r.question_id = detail::required_string(obj, "question_id", ctx);
    ctx.item = r.question_id;
    const std::string code = detail::required_string(obj, "input_language", ctx);
    if (!LanguageCode::valid(code)) throw IngestError("invalid language code '" + code + "'", ctx);
    r.input_language = LanguageCode::parse(code);
    r.model_tag = detail::required_string(obj, "model_tag", ctx);
    r.output = detail::required_string(obj, "output", ctx);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<GenerationRecord> read_generation_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open generation log", ErrorContext{path.string(), {}, {}});
  return read_generation_log(in, path.string());
}

inline void write_generation_log(std::ostream& out, std::span<const GenerationRecord> records) {
  for (const auto& r : records) {
    nlohmann::json j{{"question_id", r.question_id},
                     {"input_language", r.input_language.str()},
                     {"model_tag", r.model_tag},
                     {"output", r.output}};
    out << j.dump() << '\n';
  }
}

inline nlohmann::json verdict_to_json(const Verdict& v) {
  nlohmann::json j{{"question_id", v.question_id},
                   {"input_language", v.input_language.str()},
                   {"model_tag", v.model_tag},
                   {"label", std::string(to_string(v.label))},
                   {"output", v.raw_output},
                   {"candidate", v.candidate}};
  j["matched_language"] = v.matched_language ? nlohmann::json(v.matched_language->str()) : nlohmann::json(nullptr);
  j["matched_answer"] = v.matched_language ? nlohmann::json(v.matched_answer) : nlohmann::json(nullptr);
  nlohmann::json all = nlohmann::json::array();
  for (const auto& l : v.matched_languages) all.push_back(l.str());
  j["matched_languages"] = all;
  if (v.langid) {
    nlohmann::json scores = nlohmann::json::object();
    for (const auto& [l, d] : v.langid->scores) scores[l.str()] = d;
    j["langid"] = {{"predicted", v.langid->label()},
                   {"margin", v.langid->margin == kUnboundedMargin ? nlohmann::json("inf") : nlohmann::json(v.langid->margin)},
                   {"scores", scores}};
    j["langid_disagrees"] = v.langid_disagrees();
  }
  return j;
}

inline void write_verdicts(std::ostream& out, std::span<const Verdict> verdicts) {
  for (const auto& v : verdicts) out << verdict_to_json(v).dump() << '\n';
}

}  // namespace cocola
