#include <random>

#include <gtest/gtest.h>

#include "cocola/metrics.hpp"
#include "cocola/metrics_io.hpp"
#include "set_oracles.hpp"

using namespace cocola;
using namespace testing_support;

namespace {

IdSet ids(std::initializer_list<int> xs) {
  IdSet out;
  for (int x : xs) out.insert(id_of(static_cast<std::size_t>(x)));
  return out;
}

CorrectSets family(const IdSet& own, const IdSet& ref, std::size_t n, const IdSet& other = {}) {
  CorrectSets s;
  s.input_language = lang::fr;
  for (std::size_t i = 0; i < n; ++i) s.universe.insert(id_of(i));
  s.by_output[lang::fr] = own;
  s.by_output[lang::en] = ref;
  if (!other.empty()) s.by_output[lang::de] = other;
  return s;
}

}  // namespace

TEST(Jaccard, Examples) {
  EXPECT_DOUBLE_EQ(jaccard(ids({1, 2, 3}), ids({1, 2, 3})), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(ids({1, 2, 3}), ids({2, 3, 4})), 0.5);
  EXPECT_FALSE(jaccard_ratio(IdSet{}, IdSet{}).defined());
  EXPECT_EQ(jaccard(IdSet{}, IdSet{}), 0.0);
  EXPECT_EQ(known_unknown(ids({1, 2}), ids({2, 3, 4})), std::make_pair(std::size_t{1}, std::size_t{2}));
  EXPECT_EQ(known_unknown(ids({1, 2}), ids({1, 2})), std::make_pair(std::size_t{0}, std::size_t{0}));
}

TEST(Jaccard, MatchesOracleAndInvariantsOnRandomPairs) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 1000; ++t) {
    const auto s = random_family(rng);
    const auto& a = s.of(lang::de);
    const auto& b = s.of(lang::it);
    const auto n = s.universe.size();
    const auto o = oracle_pair(a, b, n);
    const Ratio r = jaccard_ratio(a, b);
    EXPECT_EQ(r.numerator, o.both);
    EXPECT_EQ(r.denominator, o.either);
    const double j = jaccard(a, b);
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, 1.0);
    EXPECT_EQ(j, jaccard(b, a));
    if (!a.empty()) {
      EXPECT_EQ(jaccard(a, a), 1.0);
    }
    const auto [ab, ba] = known_unknown(a, b);
    EXPECT_EQ(ab, o.only_a);
    EXPECT_EQ(ba, o.only_b);
    EXPECT_EQ(ab + o.both, a.size());
    // Adding a shared element never lowers the overlap.
    IdSet a2 = a, b2 = b;
    a2.insert("zshared");
    b2.insert("zshared");
    EXPECT_GE(jaccard(a2, b2), j);
  }
}

TEST(CoCoCoLa, GeneralExamples) {
  auto s = family(ids({1, 2, 3, 4, 5, 6, 7, 8, 9}), ids({10}), 11);
  EXPECT_EQ(cococola_general(s), (Ratio{9, 10}));
  s = family(ids({1, 2, 3}), ids({1, 2, 3}), 4);
  EXPECT_FALSE(cococola_general(s).defined());
  s = family(ids({1, 2}), {}, 4);
  EXPECT_EQ(cococola_general(s).value(), 1.0);
  s = family({}, ids({1}), 4, ids({2}));
  EXPECT_EQ(cococola_general(s).value(), 0.0);
  s.input_language = lang::en;
  EXPECT_THROW(cococola_general(s), PreconditionError);
}

TEST(CoCoCoLa, SimplifiedExamples) {
  EXPECT_EQ(cococola_simplified(family(ids({1, 2, 3, 4, 5, 6, 7, 8, 9}), ids({10}), 11)).value(), 0.9);
  EXPECT_EQ(cococola_simplified(family({}, ids({1, 2, 3, 4, 5, 6, 7}), 8)).value(), 0.0);
  EXPECT_FALSE(cococola_simplified(family({}, {}, 3)).defined());
  EXPECT_THROW(cococola_simplified(family(ids({1}), ids({1}), 3)), PreconditionError);
}

TEST(CumulativeAccuracy, Examples) {
  EXPECT_EQ(cumulative_accuracy(family(ids({0, 1, 2}), {}, 3)), 1.0);
  EXPECT_DOUBLE_EQ(cumulative_accuracy(family(ids({0, 1, 2, 3, 4, 5}), ids({6, 7, 8}), 10)), 0.9);
  CorrectSets empty;
  EXPECT_THROW(cumulative_accuracy(empty), PreconditionError);
}

TEST(DeltaAccuracy, Examples) {
  EXPECT_NEAR(delta_accuracy(13.27, 38.44), 25.17, 1e-9);
  EXPECT_EQ(delta_accuracy(42.0, 42.0), 0.0);
  EXPECT_THROW(delta_accuracy(-1.0, 3.0), PreconditionError);
  EXPECT_THROW(delta_accuracy(1.0, 100.5), PreconditionError);
}

TEST(CoCoCoLa, MatchesElementWiseOraclesOnRandomFamilies) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 2000; ++t) {
    const auto s = random_family(rng);
    const auto g = oracle_general(s);
    EXPECT_EQ(cococola_general(s), (Ratio{g.num, g.den}));
    const auto c = oracle_cumulative(s);
    EXPECT_EQ(cumulative_accuracy(s), static_cast<double>(c.num) / c.den);
    const double floor = static_cast<double>(std::max(s.of(lang::fr).size(), s.of(lang::en).size())) / s.universe.size();
    EXPECT_GE(cumulative_accuracy(s), floor);
    const auto o = oracle_pair(s.of(lang::fr), s.of(lang::en), s.universe.size());
    if (o.both == 0) {
      const auto sp = oracle_simplified(s);
      EXPECT_EQ(cococola_simplified(s), (Ratio{sp.num, sp.den}));
    } else {
      EXPECT_THROW(cococola_simplified(s), PreconditionError);
    }
    if (const auto v = cococola_general(s).value()) {
      EXPECT_GE(*v, 0.0);
      EXPECT_LE(*v, 1.0);
    }
  }
}

TEST(CoCoCoLa, GeneralEqualsSimplifiedOnDisjointFamilies) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 2000; ++t) {
    const auto s = random_disjoint_family(rng);
    const Ratio g = cococola_general(s);
    const Ratio sp = cococola_simplified(s);
    EXPECT_EQ(g, sp);
  }
}

TEST(CoCoCoLa, ReportLeavesReferenceLanguageUndefined) {
  auto s = family(ids({1}), ids({2}), 4);
  s.input_language = lang::en;
  const auto r = cococola_report(s);
  EXPECT_FALSE(r.ratio_general.defined());
  EXPECT_FALSE(r.ratio_simplified);
  EXPECT_EQ(r.cumulative_accuracy, 0.25);
}

TEST(CoCoCoLa, ReportCountsAndOptionalSimplified) {
  const auto r = cococola_report(family(ids({0, 1}), ids({2}), 5, ids({2, 3})), "m");
  EXPECT_EQ(r.count_input, 2u);
  EXPECT_EQ(r.count_reference, 1u);
  EXPECT_EQ(r.count_other, 2u);
  EXPECT_EQ(r.universe, 5u);
  EXPECT_EQ(r.ratio_general, (Ratio{2, 4}));
  ASSERT_TRUE(r.ratio_simplified);
  EXPECT_EQ(*r.ratio_simplified, (Ratio{2, 3}));
  EXPECT_FALSE(cococola_report(family(ids({0, 1}), ids({1}), 3)).ratio_simplified);
}

TEST(Ratio, SameValueComparesCrossMultiplied) {
  EXPECT_TRUE(same_value(Ratio{1, 2}, Ratio{2, 4}));
  EXPECT_FALSE(same_value(Ratio{1, 2}, Ratio{2, 3}));
  EXPECT_TRUE(same_value(Ratio{}, Ratio{0, 0}));
  EXPECT_FALSE(same_value(Ratio{}, Ratio{0, 1}));
}

TEST(Overlap, MatrixIsSymmetricWithUnitDiagonal) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    auto s = random_family(rng);
    std::map<LanguageCode, IdSet> correct;
    for (const auto& l : default_language_order()) correct[l] = s.of(l);
    const auto m = overlap_matrix(correct, default_language_order());
    for (std::size_t a = 0; a < 7; ++a) {
      const auto& la = m.languages[a];
      EXPECT_EQ(m.iou[a][a], correct[la].empty() ? 0.0 : 1.0);
      EXPECT_EQ(m.undefined[a][a], correct[la].empty());
      for (std::size_t b = 0; b < 7; ++b) {
        EXPECT_EQ(m.iou[a][b], m.iou[b][a]);
        const auto o = oracle_pair(correct[la], correct[m.languages[b]], s.universe.size());
        EXPECT_EQ(m.known_not_other[a][b], o.only_a);
      }
    }
  }
  std::map<LanguageCode, IdSet> partial{{lang::en, {}}};
  const std::vector<LanguageCode> order{lang::en, lang::fr};
  EXPECT_THROW(overlap_matrix(partial, order), PreconditionError);
}

TEST(MetricsIo, LanguageResultRoundTripsThroughJson) {
  std::vector<Verdict> vs;
  for (int i = 0; i < 4; ++i) {
    Verdict v;
    v.question_id = id_of(i);
    v.input_language = lang::fr;
    if (i < 2) {
      v.label = VerdictLabel::correct_input_lang;
      v.matched_language = lang::fr;
    } else if (i == 2) {
      v.label = VerdictLabel::correct_english;
      v.matched_language = lang::en;
    }
    vs.push_back(v);
  }
  IdSet universe;
  for (int i = 0; i < 5; ++i) universe.insert(id_of(i));
  MetricsFile f;
  f.version = "0.1.0";
  f.languages.push_back(language_result(vs, lang::fr, universe, Scope::filtered, Membership::primary, lang::en, "m", "sft"));
  std::map<LanguageCode, IdSet> correct{{lang::en, ids({1, 2})}, {lang::fr, {}}};
  const std::vector<LanguageCode> order{lang::en, lang::fr};
  f.overlaps.push_back({"m", "sft", overlap_matrix(correct, order)});

  const auto back = metrics_from_json(to_json(f));
  ASSERT_EQ(back.languages.size(), 1u);
  const auto& r = back.languages[0];
  EXPECT_EQ(r.scope, Scope::filtered);
  EXPECT_EQ(r.report.ratio_general, (Ratio{2, 3}));
  EXPECT_EQ(r.report.count_input, 2u);
  EXPECT_EQ(r.incorrect, 2u);
  EXPECT_EQ(r.label_counts.at("incorrect"), 1u);
  EXPECT_EQ(to_json(back), to_json(f));
  ASSERT_EQ(back.overlaps.size(), 1u);
  EXPECT_TRUE(back.overlaps[0].matrix.undefined[1][1]);

  std::ostringstream csv;
  write_overlap_csv(csv, f.overlaps[0].matrix);
  EXPECT_EQ(csv.str(), "language,en,fr\nen,1,0\nfr,0,undefined\n");
}

TEST(MetricsIo, RejectsMalformedFiles) {
  EXPECT_THROW(metrics_from_json(nlohmann::json::object()), IngestError);
  nlohmann::json j{{"version", "x"}, {"results", {{{"kind", "mystery"}}}}};
  EXPECT_THROW(metrics_from_json(j), IngestError);
}
