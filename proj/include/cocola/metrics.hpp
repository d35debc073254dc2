#pragma once

// Set metrics over correctly answered question ids: Jaccard overlap,
// known/unknown asymmetry, cumulative accuracy and the CoCo-CoLa ratio in its
// general and filtered-subset forms.

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <ranges>
#include <span>
#include <utility>
#include <vector>

#include "cocola/corpus.hpp"
#include "cocola/error.hpp"
#include "cocola/language.hpp"
#include "cocola/matcher.hpp"

namespace cocola {

/// Exact non-negative rational. A zero denominator is the undefined sentinel.
struct Ratio {
  std::size_t numerator = 0;
  std::size_t denominator = 0;

  bool defined() const noexcept { return denominator != 0; }
  std::optional<double> value() const {
    if (!defined()) return std::nullopt;
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  double value_or(double fallback) const { return defined() ? *value() : fallback; }

  /// Equality of the represented values; two undefined ratios compare equal.
  friend bool same_value(const Ratio& a, const Ratio& b) {
    if (!a.defined() || !b.defined()) return a.defined() == b.defined();
    using wide = unsigned __int128;
    return static_cast<wide>(a.numerator) * b.denominator == static_cast<wide>(b.numerator) * a.denominator;
  }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Membership counts of two sorted ranges in one merge pass.
struct SetCounts {
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  std::size_t both = 0;

  std::size_t union_size() const noexcept { return only_a + only_b + both; }
};

template <std::ranges::input_range A, std::ranges::input_range B>
SetCounts set_counts(const A& a, const B& b) {
  SetCounts c;
  auto ia = std::ranges::begin(a);
  auto ib = std::ranges::begin(b);
  const auto ea = std::ranges::end(a);
  const auto eb = std::ranges::end(b);
  while (ia != ea && ib != eb) {
    if (*ia < *ib) {
      ++c.only_a;
      ++ia;
    } else if (*ib < *ia) {
      ++c.only_b;
      ++ib;
    } else {
      ++c.both;
      ++ia;
      ++ib;
    }
  }
  for (; ia != ea; ++ia) ++c.only_a;
  for (; ib != eb; ++ib) ++c.only_b;
  return c;
}

/// |A ∩ B| / |A ∪ B| as an exact ratio (undefined when both are empty).
template <std::ranges::input_range A, std::ranges::input_range B>
Ratio jaccard_ratio(const A& a, const B& b) {
  const SetCounts c = set_counts(a, b);
  return {c.both, c.union_size()};
}

/// Jaccard index; 0 when both sets are empty.
template <std::ranges::input_range A, std::ranges::input_range B>
double jaccard(const A& a, const B& b) {
  return jaccard_ratio(a, b).value_or(0.0);
}

/// (|A \ B|, |B \ A|): answers known in one language but not the other.
template <std::ranges::input_range A, std::ranges::input_range B>
std::pair<std::size_t, std::size_t> known_unknown(const A& a, const B& b) {
  const SetCounts c = set_counts(a, b);
  return {c.only_a, c.only_b};
}

/// |C_ii \ U| / |C_ii Δ U| with U the union of correct sets in every other output language.
inline Ratio cococola_general(const CorrectSets& sets) {
  if (sets.input_language == sets.reference_language) {
    throw PreconditionError("CoCo-CoLa is undefined for the reference language " + sets.reference_language.str());
  }
  const SetCounts c = set_counts(sets.of(sets.input_language), sets.other_languages());
  return {c.only_a, c.only_a + c.only_b};
}

/// |C_ii| / (|C_ii| + |C_ien|); requires disjoint C_ii and C_ien.
inline Ratio cococola_simplified(const CorrectSets& sets) {
  const IdSet& own = sets.of(sets.input_language);
  const IdSet& ref = sets.of(sets.reference_language);
  const SetCounts c = set_counts(own, ref);
  if (c.both != 0) {
    throw PreconditionError("C_ii and C_ien overlap on " + std::to_string(c.both) +
                            " ids; the universe is not a filtered subset");
  }
  return {own.size(), own.size() + ref.size()};
}

/// |C_ii ∪ C_ien| / |universe|.
inline double cumulative_accuracy(const CorrectSets& sets) {
  if (sets.universe.empty()) throw PreconditionError("cumulative accuracy over an empty universe");
  const SetCounts c = set_counts(sets.of(sets.input_language), sets.of(sets.reference_language));
  return static_cast<double>(c.union_size()) / static_cast<double>(sets.universe.size());
}

/// Accuracy in the input language: |C_ii| / |universe|.
inline double input_language_accuracy(const CorrectSets& sets) {
  if (sets.universe.empty()) throw PreconditionError("accuracy over an empty universe");
  return static_cast<double>(sets.of(sets.input_language).size()) / static_cast<double>(sets.universe.size());
}

/// SFT minus PLM accuracy, both on the 0..100 percent scale.
inline double delta_accuracy(double plm, double sft) {
  if (!(plm >= 0.0 && plm <= 100.0) || !(sft >= 0.0 && sft <= 100.0)) {
    throw PreconditionError("accuracies must lie in [0, 100]");
  }
  return sft - plm;
}

struct CoCoColaReport {
  LanguageCode input_language;
  LanguageCode reference_language = lang::en;
  std::string model_tag;
  Ratio ratio_general;
  /// Present only when C_ii and C_ien are disjoint over the universe.
  std::optional<Ratio> ratio_simplified;
  double cumulative_accuracy = 0.0;
  double input_language_accuracy = 0.0;
  std::size_t count_input = 0;      // |C_ii|
  std::size_t count_reference = 0;  // |C_ien|
  std::size_t count_other = 0;      // |∪_{Lo≠Li} C_{Li→Lo}|
  std::size_t universe = 0;
};

inline CoCoColaReport cococola_report(const CorrectSets& sets, std::string model_tag = {}) {
  CoCoColaReport r;
  r.input_language = sets.input_language;
  r.reference_language = sets.reference_language;
  r.model_tag = std::move(model_tag);
  // The ratio stays undefined for the reference language itself.
  if (sets.input_language != sets.reference_language) {
    r.ratio_general = cococola_general(sets);
    if (set_counts(sets.of(sets.input_language), sets.of(sets.reference_language)).both == 0) {
      r.ratio_simplified = cococola_simplified(sets);
    }
  }
  r.cumulative_accuracy = cumulative_accuracy(sets);
  r.input_language_accuracy = input_language_accuracy(sets);
  r.count_input = sets.of(sets.input_language).size();
  r.count_reference = sets.of(sets.reference_language).size();
  r.count_other = sets.other_languages().size();
  r.universe = sets.universe.size();
  return r;
}

/// Pairwise Jaccard overlap of per-language correct sets.
struct OverlapMatrix {
  std::vector<LanguageCode> languages;
  std::vector<std::vector<double>> iou;
  /// Cells where both sets were empty (iou reported as 0).
  std::vector<std::vector<bool>> undefined;
  /// known[a][b] = |C_a \ C_b|.
  std::vector<std::vector<std::size_t>> known_not_other;
};

inline OverlapMatrix overlap_matrix(const std::map<LanguageCode, IdSet>& correct,
                                    std::span<const LanguageCode> order) {
  OverlapMatrix m;
  for (const auto& l : order) {
    if (!correct.contains(l)) throw PreconditionError("no correct set for language " + l.str());
    m.languages.push_back(l);
  }
  const std::size_t n = m.languages.size();
  m.iou.assign(n, std::vector<double>(n, 0.0));
  m.undefined.assign(n, std::vector<bool>(n, false));
  m.known_not_other.assign(n, std::vector<std::size_t>(n, 0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const IdSet& sa = correct.at(m.languages[a]);
      const IdSet& sb = correct.at(m.languages[b]);
      const Ratio r = jaccard_ratio(sa, sb);
      m.iou[a][b] = m.iou[b][a] = r.value_or(0.0);
      m.undefined[a][b] = m.undefined[b][a] = !r.defined();
      const auto [ab, ba] = known_unknown(sa, sb);
      m.known_not_other[a][b] = ab;
      m.known_not_other[b][a] = ba;
    }
  }
  return m;
}

}  // namespace cocola
