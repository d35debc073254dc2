// Acceptance suite: one PASS/FAIL line per criterion with its wall time.
// Every tolerance and time budget is fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cocola/checkpoint_diff.hpp"
#include "cocola/freeze_plan.hpp"
#include "cocola/metrics.hpp"
#include "cocola/report.hpp"
#include "cocola/synth.hpp"
#include "set_oracles.hpp"
#include "tensor_fixtures.hpp"

using namespace cocola;
using namespace testing_support;

namespace {

constexpr double kDeltaTolerance = 0.01;           // percentage points
constexpr double kEquivalenceTolerance = 1e-12;    // absolute, on top of exact counts
constexpr double kDiffRelativeTolerance = 1e-6;
constexpr double kScalingRelativeTolerance = 1e-9;
constexpr std::size_t kFuzzInstances = 10000;
constexpr std::uint64_t kLargestTensor = 10'000'000;
constexpr std::size_t kPlantedRecords = 200;

/// Collects failures; `check` records a message when the condition is false.
struct Outcome {
  std::vector<std::string> failures;
  std::string note;
  void check(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Outcome&)> body;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

bool same_ratio(const Ratio& r, const Counted& c) { return r.numerator == c.num && r.denominator == c.den; }

// ---------- accuracy table ----------

void table_one(Outcome& o) {
  std::ifstream in(fixture("table1_accuracy.csv"));
  std::string line;
  std::getline(in, line);
  std::map<std::pair<std::string, std::string>, double> printed;
  while (std::getline(in, line)) {
    std::istringstream s(line);
    std::string model, language, plm, sft, delta;
    std::getline(s, model, ',');
    std::getline(s, language, ',');
    std::getline(s, plm, ',');
    std::getline(s, sft, ',');
    std::getline(s, delta, ',');
    printed[{model, language}] = std::stod(delta);
  }
  o.check(printed.size() == 28, "expected 28 printed rows, got " + std::to_string(printed.size()));
  const auto table = render_accuracy_table(read_accuracy_csv(fixture("table1_accuracy.csv")));
  std::size_t compared = 0;
  for (const auto& [key, delta] : printed) {
    const auto* cell = table.find(key.first, LanguageCode::parse(key.second));
    o.check(cell != nullptr, "missing cell " + key.first + "/" + key.second);
    if (!cell) continue;
    ++compared;
    o.check(std::fabs(cell->delta - delta) <= kDeltaTolerance,
            key.first + "/" + key.second + ": " + num(cell->delta) + " vs printed " + num(delta));
  }
  const auto* en8 = table.find("Llama-8B", lang::en);
  o.check(en8 && std::fabs(en8->delta - 38.06) <= kDeltaTolerance, "Llama-8B en delta");
  o.note = std::to_string(compared) + " deltas";
}

// ---------- set metrics ----------

void ratio_equivalence(Outcome& o) {
  std::mt19937_64 rng(20240601);
  std::size_t defined = 0;
  for (std::size_t t = 0; t < kFuzzInstances; ++t) {
    const CorrectSets s = random_disjoint_family(rng);
    const Ratio g = cococola_general(s);
    const Ratio q = cococola_simplified(s);
    o.check(g == q, "instance " + std::to_string(t) + ": general " + std::to_string(g.numerator) + "/" +
                        std::to_string(g.denominator) + " vs simplified " + std::to_string(q.numerator) + "/" +
                        std::to_string(q.denominator));
    o.check(g.defined() == q.defined(), "definedness differs at " + std::to_string(t));
    if (g.defined()) {
      ++defined;
      o.check(std::fabs(*g.value() - *q.value()) <= kEquivalenceTolerance, "value differs at " + std::to_string(t));
    }
  }
  o.note = std::to_string(kFuzzInstances) + " families, " + std::to_string(defined) + " with a defined ratio";
}

void set_metric_oracles(Outcome& o) {
  std::mt19937_64 rng(777);
  const auto order = default_language_order();
  for (std::size_t t = 0; t < kFuzzInstances; ++t) {
    const CorrectSets s = random_family(rng);
    const std::size_t n = s.universe.size();
    const auto tag = " (instance " + std::to_string(t) + ")";

    // Pairwise measures over every language pair, with the overlap matrix as a cross-check.
    std::map<LanguageCode, IdSet> sets;
    for (const auto& l : order) sets[l] = s.of(l);
    const OverlapMatrix m = overlap_matrix(sets, order);
    for (std::size_t a = 0; a < order.size(); ++a) {
      for (std::size_t b = 0; b < order.size(); ++b) {
        const IdSet& sa = sets[order[a]];
        const IdSet& sb = sets[order[b]];
        const PairCounts pc = oracle_pair(sa, sb, n);
        const Ratio j = jaccard_ratio(sa, sb);
        o.check(j.numerator == pc.both && j.denominator == pc.either, "jaccard counts" + tag);
        const double jv = jaccard(sa, sb);
        o.check(jv >= 0.0 && jv <= 1.0, "jaccard bounds" + tag);
        o.check(jv == jaccard(sb, sa), "jaccard symmetry" + tag);
        o.check(m.iou[a][b] == m.iou[b][a] && m.iou[a][b] == jv, "overlap matrix cell" + tag);
        if (a == b) o.check(sa.empty() ? m.undefined[a][a] : m.iou[a][a] == 1.0, "overlap diagonal" + tag);
        const auto [ab, ba] = known_unknown(sa, sb);
        o.check(ab == pc.only_a && ba == pc.only_b, "known_unknown counts" + tag);
        o.check(ab + pc.both == sa.size(), "partition identity" + tag);
        o.check(m.known_not_other[a][b] == ab, "known matrix" + tag);
      }
    }

    // Adding one id to both sets never lowers their overlap.
    IdSet a2 = s.of(lang::fr), b2 = s.of(lang::de);
    const double before = jaccard(a2, b2);
    a2.insert("zz-shared");
    b2.insert("zz-shared");
    o.check(jaccard(a2, b2) >= before, "jaccard monotonicity" + tag);

    const Counted cum = oracle_cumulative(s);
    o.check(cumulative_accuracy(s) == static_cast<double>(cum.num) / static_cast<double>(cum.den),
            "cumulative accuracy" + tag);
    const Ratio g = cococola_general(s);
    o.check(same_ratio(g, oracle_general(s)), "general ratio counts" + tag);
    if (g.defined()) o.check(*g.value() >= 0.0 && *g.value() <= 1.0, "general ratio bounds" + tag);
    const bool overlap = !std::ranges::all_of(s.of(lang::fr), [&](const auto& id) { return !s.of(lang::en).contains(id); });
    if (overlap) {
      bool threw = false;
      try {
        cococola_simplified(s);
      } catch (const PreconditionError&) {
        threw = true;
      }
      o.check(threw, "simplified ratio must reject overlapping sets" + tag);
    } else {
      const Ratio q = cococola_simplified(s);
      o.check(same_ratio(q, oracle_simplified(s)), "simplified ratio counts" + tag);
      if (q.defined()) o.check(*q.value() >= 0.0 && *q.value() <= 1.0, "simplified ratio bounds" + tag);
    }

    // Moving an other-language id into the input-language set cannot lower the ratio.
    const IdSet others = s.other_languages();
    if (!others.empty() && g.defined()) {
      CorrectSets moved = s;
      const std::string id = *others.begin();
      moved.by_output[lang::fr].insert(id);
      for (auto& [l, ids] : moved.by_output) {
        if (l != lang::fr) ids.erase(id);
      }
      o.check(*cococola_general(moved).value() >= *g.value(), "general ratio monotonicity" + tag);
    }
  }
  o.note = std::to_string(kFuzzInstances) + " families x " + std::to_string(order.size() * order.size()) + " pairs";
}

// ---------- checkpoint diff ----------

DiffEntry diff_one(const std::filesystem::path& a, const std::filesystem::path& b, const std::string& name) {
  const auto ma = read_manifest(a), mb = read_manifest(b);
  std::ifstream sa(a, std::ios::binary), sb(b, std::ios::binary);
  return diff_tensor(*ma.find(name), sa, *mb.find(name), sb);
}

void diff_oracle(Outcome& o) {
  TempDir dir;
  std::mt19937_64 rng(99);
  std::size_t cases = 0;
  const std::vector<std::pair<DType, std::uint64_t>> sizes{
      {DType::F16, 1},       {DType::BF16, 3},         {DType::F32, 65537},       {DType::F16, 1'000'003},
      {DType::BF16, 2'500'000}, {DType::F64, 1'000'000}, {DType::F32, kLargestTensor}};
  for (const auto& [dt, n] : sizes) {
    double want = 0.0;
    {
      const auto a = random_tensor("w", dt, {n}, rng);
      const auto b = random_tensor("w", dt, {n}, rng);
      write_container(dir / "a", std::vector<TensorData>{a.data});
      write_container(dir / "b", std::vector<TensorData>{b.data});
      want = oracle_mean_abs_diff(a.values, b.values);
    }
    const double got = diff_one(dir / "a", dir / "b", "w").mean_abs_delta;
    o.check(std::fabs(got - want) <= kDiffRelativeTolerance * std::fabs(want),
            std::string(to_string(dt)) + " n=" + std::to_string(n) + ": " + num(got) + " vs " + num(want));
    o.check(diff_one(dir / "a", dir / "a", "w").mean_abs_delta == 0.0, "self diff " + std::string(to_string(dt)));
    o.check(diff_one(dir / "b", dir / "a", "w").mean_abs_delta == got, "symmetry " + std::string(to_string(dt)));
    ++cases;
  }

  // Whole-checkpoint properties on a small layered model.
  std::vector<TensorData> base, tuned;
  std::vector<KnownTensor> known;
  std::vector<std::vector<double>> steps;
  std::uniform_real_distribution<double> u(-1e-3, 1e-3);
  for (int l = 0; l < 6; ++l) {
    for (const char* part : {"attn.qkv.weight", "mlp.fc.weight"}) {
      const auto t = random_tensor("layers." + std::to_string(l) + "." + part, DType::F32, {4099}, rng);
      std::vector<double> step(t.values.size());
      for (auto& s : step) s = u(rng);
      known.push_back(t);
      steps.push_back(step);
      base.push_back(make_tensor<double>(t.data.name, DType::F64, t.data.shape, t.values));
    }
  }
  auto shifted = [&](double k) {
    std::vector<TensorData> out;
    for (std::size_t i = 0; i < known.size(); ++i) {
      std::vector<double> v(known[i].values.size());
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = known[i].values[j] + k * steps[i][j];
      out.push_back(make_tensor<double>(known[i].data.name, DType::F64, known[i].data.shape, v));
    }
    return out;
  };
  write_container(dir / "base", base);
  write_container(dir / "t1", shifted(1.0));
  const auto mbase = read_manifest(dir / "base");
  const auto m1 = read_manifest(dir / "t1");
  const auto self = diff_checkpoints(mbase, mbase, toy_scheme());
  for (const auto& e : self.entries) o.check(e.mean_abs_delta == 0.0, "checkpoint self diff " + e.name);
  DiffOptions serial;
  serial.threads = 1;
  DiffOptions parallel;
  parallel.threads = 4;
  parallel.chunk_elements = 1000;
  const auto forward = diff_checkpoints(mbase, m1, toy_scheme(), serial);
  const auto backward = diff_checkpoints(m1, mbase, toy_scheme(), parallel);
  for (std::size_t i = 0; i < forward.entries.size(); ++i) {
    o.check(forward.entries[i].mean_abs_delta == backward.entries[i].mean_abs_delta,
            "checkpoint symmetry " + forward.entries[i].name);
  }
  for (double k : {0.5, 2.0, 3.0, 10.0}) {
    write_container(dir / "tk", shifted(k));
    const auto dk = diff_checkpoints(mbase, read_manifest(dir / "tk"), toy_scheme());
    for (auto kind : {ModuleKind::attention, ModuleKind::mlp}) {
      for (int l = 0; l < 6; ++l) {
        const double one = *forward.matrix.at(kind, l);
        const double got = *dk.matrix.at(kind, l);
        o.check(std::fabs(got - k * one) <= kScalingRelativeTolerance * k * one,
                "k=" + num(k) + " layer " + std::to_string(l) + ": " + num(got) + " vs " + num(k * one));
      }
    }
  }
  o.note = std::to_string(cases) + " tensors up to " + std::to_string(kLargestTensor) + " elements";
}

// ---------- freeze plans ----------

std::vector<TensorMeta> toy_manifest(const std::vector<std::uint64_t>& layer_sizes) {
  std::vector<TensorMeta> out;
  auto add = [&](std::string name, std::uint64_t n) {
    TensorMeta t;
    t.name = std::move(name);
    t.dtype = DType::F32;
    t.shape = {n};
    t.byte_length = 4 * n;
    out.push_back(t);
  };
  add("embed.weight", 512);
  add("head.weight", 512);
  for (std::size_t l = 0; l < layer_sizes.size(); ++l) {
    add("layers." + std::to_string(l) + ".attn.qkv.weight", layer_sizes[l] / 2);
    add("layers." + std::to_string(l) + ".mlp.fc.weight", layer_sizes[l] - layer_sizes[l] / 2);
  }
  return out;
}

void freeze_plans(Outcome& o) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 60; ++t) {
    const int layers = std::uniform_int_distribution<int>(1, 48)(rng);
    std::vector<std::uint64_t> sizes(static_cast<std::size_t>(layers));
    for (auto& s : sizes) s = std::uniform_int_distribution<std::uint64_t>(2, 100000)(rng);
    const auto m = toy_manifest(sizes);
    std::set<std::string> previous;
    std::uint64_t previous_count = 0;
    for (int k = 1; k <= layers; ++k) {
      const auto plan = plan_final_layers(m, toy_scheme(), k);
      const auto now = plan.trainable_names();
      o.check(std::includes(now.begin(), now.end(), previous.begin(), previous.end()), "final-k monotonicity");
      o.check(plan.trainable_param_count >= previous_count, "final-k count monotonicity");
      o.check(plan.trainable.size() == m.size(), "plan covers the manifest");
      previous = now;
      previous_count = plan.trainable_param_count;

      // The matched prefix covers the reference count and overshoots by less than one layer.
      const auto prefix = plan_matched_prefix(m, toy_scheme(), plan);
      const std::uint64_t want = plan.trainable_param_count;
      o.check(prefix.trainable_param_count >= want, "matched prefix below the reference count");
      const int last = *prefix.trainable_layers.rbegin();
      o.check(prefix.trainable_param_count - want < sizes[static_cast<std::size_t>(last)],
              "matched prefix overshoot of a whole layer");
      o.check(*prefix.trainable_layers.begin() == 0 && static_cast<int>(prefix.trainable_layers.size()) == last + 1,
              "matched prefix is contiguous from the first layer");
    }
  }

  const Manifest llama = read_header_json(fixture("llama-3.2-1b.header.json"));
  const auto final6 = plan_final_layers(llama.tensors, llama_scheme(), 6);
  o.check(final6.layer_count == 16, "llama layer count");
  o.check(final6.trainable_layers == std::set<int>{10, 11, 12, 13, 14, 15}, "llama final six layers");
  o.check(render_ranges(final6.trainable_layers) == "11-16", "llama final six renders as 11-16");

  DiffMatrix matrix({ModuleKind::attention, ModuleKind::mlp}, 32);
  for (int l = 0; l < 32; ++l) {
    matrix.set(ModuleKind::mlp, l, 0.001 * (l + 1), 1);
    matrix.set(ModuleKind::attention, l, 0.0005 * (l + 1), 1);
  }
  const auto half = plan_from_delta(matrix, toy_manifest(std::vector<std::uint64_t>(32, 10)), toy_scheme(), 0.5);
  std::set<int> upper;
  for (int l = 16; l < 32; ++l) upper.insert(l);
  o.check(half.trainable_layers == upper, "top half of 32 increasing deltas");
  o.check(render_ranges(half.trainable_layers, true) == "16:32", "top half renders as slice 16:32");
  o.note = "llama final-6 = " + render_ranges(final6.trainable_layers) + ", top half = " +
           render_ranges(half.trainable_layers, true);
}

// ---------- training template ----------

void train_template(Outcome& o) {
  const nlohmann::json j = train_config_to_json(TrainConfigTemplate{});
  const nlohmann::json want{{"num_epochs", 3},    {"batch_size", 64}, {"gradient_accumulation", 1},
                            {"weight_decay", 0.01}, {"bf16", true},     {"seed", 42},
                            {"learning_rate", 5e-6}, {"dropout", 0.1}};
  for (const auto& [key, value] : want.items()) {
    o.check(j.contains(key), "missing field " + key);
    if (j.contains(key)) o.check(j[key] == value, key + " = " + j[key].dump() + ", expected " + value.dump());
  }
  // The emitted plan file carries the same block.
  const Manifest llama = read_header_json(fixture("llama-3.2-1b.header.json"));
  const auto plan = nlohmann::json::parse(
      emit_plan_string(plan_final_layers(llama.tensors, llama_scheme(), 6), TrainConfigTemplate{}));
  for (const auto& [key, value] : want.items()) o.check(plan["train_config"][key] == value, "plan file " + key);
  o.note = std::to_string(want.size()) + " fields";
}

// ---------- matcher ----------

void planted_log(Outcome& o) {
  // The fixture's test split has 150 questions, so the 200-record log is drawn
  // from the 250-question train split declared as the evaluation split.
  IngestOptions options;
  options.evaluation_split = Split::train;
  const ParallelCorpus wide = ingest_corpus(fixture("corpus7.jsonl"), options);
  const ParallelCorpus corpus = ingest_corpus(fixture("corpus7.jsonl"));
  std::size_t judged = 0, agreed = 0;
  std::map<VerdictLabel, std::size_t> seen;
  for (const auto& l : wide.languages()) {
    SynthOptions synth;
    synth.count = kPlantedRecords;
    synth.seed = 42;
    for (const auto& p : synthesize_log(wide, l, synth)) {
      const Verdict v = judge(p.record, wide, nullptr);
      ++judged;
      ++seen[p.label];
      if (v.label == p.label) {
        ++agreed;
      } else {
        o.check(false, l.str() + " " + p.record.question_id + ": planted " + std::string(to_string(p.label)) +
                           ", judged " + std::string(to_string(v.label)));
      }
    }
  }
  o.check(seen.size() == 4, "every label planted at least once");

  // Filtered subset: every id has distinct input and reference answers, and
  // judged correct sets never share an id there, even when every match counts.
  for (const auto& l : corpus.languages()) {
    if (l == lang::en) continue;
    const FilteredSubset subset = build_filtered_subset(corpus, l);
    for (const auto& id : corpus.evaluation_ids()) {
      const bool differ = normalize(corpus.item(id, l).answer) != normalize(corpus.item(id, lang::en).answer);
      o.check(subset.question_ids.contains(id) == differ, "subset membership " + l.str() + " " + id);
    }
    SynthOptions synth;
    synth.count = corpus.evaluation_ids().size();
    std::vector<Verdict> kept;
    for (const auto& p : synthesize_log(corpus, l, synth)) {
      if (subset.question_ids.contains(p.record.question_id)) kept.push_back(judge(p.record, corpus, nullptr));
    }
    const CorrectSets sets = collect_sets(kept, subset.question_ids, Membership::all_matches, lang::en, l);
    for (const auto& id : sets.of(l)) o.check(!sets.of(lang::en).contains(id), "shared id on the subset: " + id);
    if (sets.other_languages() == sets.of(lang::en)) {
      o.check(cococola_general(sets) == cococola_simplified(sets), "ratios differ on the " + l.str() + " subset");
    }
  }
  o.note = std::to_string(agreed) + "/" + std::to_string(judged) + " records agree";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"accuracy-table deltas", 1.0, table_one},
      {"general and simplified ratio agree on disjoint sets", 10.0, ratio_equivalence},
      {"set metrics match element-wise oracles", 30.0, set_metric_oracles},
      {"checkpoint diff matches full-load oracle", 60.0, diff_oracle},
      {"freeze plans", 5.0, freeze_plans},
      {"training hyperparameter template", 1.0, train_template},
      {"matcher recovers planted labels", 5.0, planted_log},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.budget_seconds) {
      o.failures.push_back("took " + num(seconds) + " s, budget " + num(c.budget_seconds) + " s");
    }
    const bool ok = o.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s  %-52s %7.3f s / %4.0f s  %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), seconds, c.budget_seconds,
                o.note.c_str());
    for (const auto& f : o.failures) std::printf("      %s\n", f.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
