#pragma once

// Constructed generation logs: outputs built from gold answers so the correct
// verdict of every record is known in advance.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cocola/corpus.hpp"
#include "cocola/error.hpp"
#include "cocola/matcher.hpp"
#include "cocola/normalize.hpp"

namespace cocola {

struct PlantedRecord {
  GenerationRecord record;
  VerdictLabel label = VerdictLabel::incorrect;
};

struct SynthOptions {
  std::size_t count = 200;
  std::uint64_t seed = 42;
  std::string model_tag = "synthetic";
  LanguageCode reference_language = lang::en;
  NormalizeOptions normalize;
};

/// One record per sampled evaluation id. Each record's output is a lightly
/// decorated gold answer (or a non-answer) chosen so that judging it yields
/// the planted label.
inline std::vector<PlantedRecord> synthesize_log(const ParallelCorpus& corpus, const LanguageCode& input,
                                                 const SynthOptions& options = {}) {
  if (!corpus.has_language(input)) throw PreconditionError("language " + input.str() + " is not in the corpus");
  std::vector<std::string> ids;
  for (const auto& id : corpus.evaluation_ids()) ids.push_back(id);
  if (options.count > ids.size()) {
    throw PreconditionError("requested " + std::to_string(options.count) + " records but the evaluation split has " +
                            std::to_string(ids.size()) + " questions");
  }
  std::mt19937_64 rng(options.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(options.count);
  std::sort(ids.begin(), ids.end());

  const bool has_ref = corpus.has_language(options.reference_language) && options.reference_language != input;
  auto norm = [&](const std::string& s) { return normalize(s, options.normalize); };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  std::vector<PlantedRecord> out;
  for (const auto& id : ids) {
    const std::string own = corpus.item(id, input).answer;
    const std::string own_n = norm(own);
    const std::string ref = has_ref ? corpus.item(id, options.reference_language).answer : std::string();
    const std::string ref_n = has_ref ? norm(ref) : std::string();

    std::vector<std::pair<VerdictLabel, std::string>> options_for_id{{VerdictLabel::correct_input_lang, own}};
    if (has_ref && ref_n != own_n) options_for_id.emplace_back(VerdictLabel::correct_english, ref);
    for (const auto& l : corpus.languages()) {
      if (l == input || l == options.reference_language) continue;
      const std::string a = corpus.item(id, l).answer;
      const std::string n = norm(a);
      if (n != own_n && (!has_ref || n != ref_n)) {
        options_for_id.emplace_back(VerdictLabel::correct_other, a);
        break;
      }
    }
    std::string wrong = "zzq unanswerable " + id;
    bool clash = false;
    for (const auto& l : corpus.languages()) clash = clash || norm(corpus.item(id, l).answer) == norm(wrong);
    if (!clash) options_for_id.emplace_back(VerdictLabel::incorrect, wrong);

    auto [label, answer] = options_for_id[pick(options_for_id.size())];
    std::string output = answer;
    if (label != VerdictLabel::incorrect && first_sentence(answer) == answer) {
      switch (pick(4)) {
        case 0: break;
        case 1: output = answer + "."; break;
        case 2: output = "The " + answer + ". More text follows here."; break;
        case 3: output = answer + "\nSecond line that is ignored."; break;
      }
    }
    out.push_back({{id, input, output, options.model_tag}, label});
  }
  return out;
}

}  // namespace cocola
