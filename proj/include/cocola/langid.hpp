#pragma once

// Character n-gram language identification (Cavnar & Trenkle out-of-place
// ranking) restricted to a candidate set, with a Devanagari script shortcut.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/corpus.hpp"
#include "cocola/error.hpp"
#include "cocola/language.hpp"
#include "cocola/normalize.hpp"

namespace cocola {

struct LangIdOptions {
  std::size_t max_ngram = 4;
  std::size_t top_k = 400;
  std::size_t min_training_questions = 50;
  /// Below this margin the prediction is "other".
  double threshold = 5.0;
};

inline constexpr double kUnboundedMargin = std::numeric_limits<double>::max();

/// Ranked n-gram list of one language; rank of ngrams()[i] is i + 1.
class LanguageProfile {
 public:
  LanguageProfile() = default;
  LanguageProfile(LanguageCode language, std::vector<std::string> ranked)
      : language_(language), ranked_(std::move(ranked)) {
    rank_.reserve(ranked_.size());
    for (std::size_t i = 0; i < ranked_.size(); ++i) {
      if (!rank_.emplace(ranked_[i], i + 1).second) {
        throw PreconditionError("duplicate n-gram in profile for " + language_.str());
      }
    }
  }

  const LanguageCode& language() const noexcept { return language_; }
  const std::vector<std::string>& ngrams() const noexcept { return ranked_; }
  std::size_t size() const noexcept { return ranked_.size(); }

  std::optional<std::size_t> rank(const std::string& ngram) const {
    auto it = rank_.find(ngram);
    if (it == rank_.end()) return std::nullopt;
    return it->second;
  }

 private:
  LanguageCode language_;
  std::vector<std::string> ranked_;
  std::unordered_map<std::string, std::size_t> rank_;
};

using ProfileSet = std::map<LanguageCode, LanguageProfile>;

/// Frequency of every character n-gram (n = 1..max_n) of space-padded tokens.
inline std::map<std::string, std::size_t> ngram_counts(std::string_view normalized_text, std::size_t max_n) {
  std::map<std::string, std::size_t> counts;
  std::size_t pos = 0;
  while (pos < normalized_text.size()) {
    auto end = normalized_text.find(' ', pos);
    if (end == std::string_view::npos) end = normalized_text.size();
    if (end > pos) {
      std::vector<std::string> cps{" "};
      for (auto& cp : code_points(normalized_text.substr(pos, end - pos))) cps.push_back(std::move(cp));
      cps.emplace_back(" ");
      for (std::size_t i = 0; i < cps.size(); ++i) {
        std::string gram;
        for (std::size_t n = 1; n <= max_n && i + n <= cps.size(); ++n) {
          gram += cps[i + n - 1];
          if (gram != " ") ++counts[gram];
        }
      }
    }
    pos = end + 1;
  }
  return counts;
}

/// Top-k n-grams by descending frequency; ties resolved by byte order.
inline std::vector<std::string> rank_ngrams(const std::map<std::string, std::size_t>& counts, std::size_t top_k) {
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size() && i < top_k; ++i) out.push_back(v[i].first);
  return out;
}

inline std::string langid_normalize(std::string_view text) {
  NormalizeOptions opts;
  opts.strip_articles = false;
  return normalize(text, opts);
}

inline LanguageProfile profile_from_text(const LanguageCode& language, std::string_view text,
                                         const LangIdOptions& options = {}) {
  return LanguageProfile(language, rank_ngrams(ngram_counts(langid_normalize(text), options.max_ngram), options.top_k));
}

/// One profile per corpus language, built from training-split question texts.
inline ProfileSet build_profiles(const ParallelCorpus& corpus, const LangIdOptions& options = {}) {
  ProfileSet out;
  const IdSet train = corpus.ids(Split::train);
  for (const auto& l : corpus.languages()) {
    if (train.size() < options.min_training_questions) {
      throw PreconditionError("insufficient training text for language " + l.str() + ": " +
                              std::to_string(train.size()) + " questions, need " +
                              std::to_string(options.min_training_questions));
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& id : train) {
      for (const auto& [gram, n] : ngram_counts(langid_normalize(corpus.item(id, l).question), options.max_ngram)) {
        counts[gram] += n;
      }
    }
    out.emplace(l, LanguageProfile(l, rank_ngrams(counts, options.top_k)));
  }
  return out;
}

struct LangIdResult {
  std::optional<LanguageCode> predicted;  // nullopt is "other"
  LanguageCode best;
  double margin = 0.0;
  std::map<LanguageCode, double> scores;  // out-of-place distance, lower is closer
  bool script_shortcut = false;

  std::string label() const { return predicted ? predicted->str() : std::string("other"); }
};

inline LangIdResult classify(std::string_view text, std::span<const LanguageCode> candidates,
                             const ProfileSet& profiles, const LangIdOptions& options = {}) {
  if (candidates.empty()) throw PreconditionError("langid: empty candidate set");
  for (const auto& c : candidates) {
    if (!profiles.contains(c)) throw PreconditionError("langid: no profile for candidate " + c.str());
  }
  const std::string normalized = langid_normalize(text);
  if (normalized.empty()) throw PreconditionError("langid: text is empty after normalization");

  LangIdResult result;
  const std::vector<std::string> ranked = rank_ngrams(ngram_counts(normalized, options.max_ngram), options.top_k);
  const double penalty = static_cast<double>(options.top_k + 1);
  for (const auto& c : candidates) {
    const LanguageProfile& profile = profiles.at(c);
    double distance = 0.0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (auto r = profile.rank(ranked[i])) {
        const double d = static_cast<double>(*r) - static_cast<double>(i + 1);
        distance += d < 0 ? -d : d;
      } else {
        distance += penalty;
      }
    }
    result.scores[c] = distance;
  }

  // Best = lowest distance, ties resolved toward the smaller code.
  std::vector<std::pair<double, LanguageCode>> order;
  for (const auto& [c, d] : result.scores) order.emplace_back(d, c);
  std::sort(order.begin(), order.end());
  result.best = order.front().second;
  result.margin = order.size() > 1 ? order[1].first - order[0].first : kUnboundedMargin;

  const bool hi_candidate = result.scores.contains(lang::hi);
  if (hi_candidate && script_profile(normalized).devanagari_share() > 0.5) {
    result.best = lang::hi;
    result.predicted = lang::hi;
    result.margin = kUnboundedMargin;
    result.script_shortcut = true;
    return result;
  }

  if (result.margin > 0.0 && result.margin >= options.threshold) result.predicted = result.best;
  return result;
}

inline nlohmann::json profiles_to_json(const ProfileSet& profiles) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [l, p] : profiles) {
    arr.push_back({{"language", l.str()}, {"ngrams", p.ngrams()}});
  }
  return {{"format", "cocola-langid-profiles"}, {"version", 1}, {"profiles", arr}};
}

inline ProfileSet profiles_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("profiles") || !j["profiles"].is_array()) {
    throw IngestError("profiles JSON must be an object with a 'profiles' array");
  }
  ProfileSet out;
  for (const auto& p : j["profiles"]) {
    const auto code = LanguageCode::parse(p.at("language").get<std::string>());
    out.emplace(code, LanguageProfile(code, p.at("ngrams").get<std::vector<std::string>>()));
  }
  return out;
}

inline void save_profiles(const ProfileSet& profiles, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write profiles", ErrorContext{path.string(), {}, {}});
  out << profiles_to_json(profiles).dump(1) << '\n';
}

inline ProfileSet load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open profiles file", ErrorContext{path.string(), {}, {}});
  try {
    return profiles_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("invalid profiles file: ") + e.what(), ErrorContext{path.string(), {}, {}});
  }
}

}  // namespace cocola
