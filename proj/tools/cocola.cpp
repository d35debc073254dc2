#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cocola/cocola.hpp"

namespace fs = std::filesystem;
using namespace cocola;

namespace {

struct CorpusArgs {
  std::string path;
  std::string languages;
  bool quarantine = false;
  bool strict = false;
  std::string split = "test";
};

struct MatchArgs {
  std::vector<std::string> logs;
  std::string model;
  std::string variant;
  std::string membership = "primary";
  std::string reference = "en";
  std::string profiles;
  bool langid = false;
  double langid_threshold = 5.0;
  std::string emit_verdicts;
};

struct Shared {
  std::string config;
  std::string out;
  CorpusArgs corpus;
  MatchArgs match;
  // diff
  std::string base, tuned, scheme = "llama";
  unsigned threads = 0;
  std::size_t chunk = kDefaultChunkElements;
  // plan
  std::string manifest, mode, matrix, reference_plan, layers, plan_out;
  int k = 0, reference_k = 0;
  double fraction = 0.0;
  bool include_head = false;
  int balanced = 0;
  // report
  std::vector<std::string> metrics, diffs, accuracy;
  std::string formats = "md,csv,json,svg";
  std::string scope = "filtered";
  std::string order;
  // ingest
  std::string profiles_out;
  // synth
  std::string input_language = "fr";
  std::size_t count = 200;
  std::uint64_t seed = 42;
  std::string labels_out;
};

bool given(CLI::App* app, const std::string& name) { return app->count(name) > 0; }

/// Config values fill in options that were not given on the command line.
void apply_config(Shared& s, CLI::App* sub) {
  if (s.config.empty()) return;
  const RunConfig c = load_run_config(s.config);
  auto has = [&](const std::string& n) {
    try {
      return given(sub, n);
    } catch (const CLI::OptionNotFound&) {
      return true;  // the subcommand has no such option
    }
  };
  if (c.corpus && !has("--corpus")) s.corpus.path = *c.corpus;
  if (c.languages && !has("--languages")) s.corpus.languages = *c.languages;
  if (c.strict && !has("--quarantine") && !has("--strict")) s.corpus.quarantine = !*c.strict;
  if (c.evaluation_split && !has("--split")) s.corpus.split = *c.evaluation_split;
  if (!c.generations.empty() && !has("--log")) s.match.logs = c.generations;
  if (c.reference && !has("--reference")) s.match.reference = *c.reference;
  if (c.membership && !has("--membership")) s.match.membership = *c.membership;
  if (c.profiles && !has("--profiles")) s.match.profiles = *c.profiles;
  if (c.langid_threshold && !has("--langid-threshold")) s.match.langid_threshold = *c.langid_threshold;
  if (c.scheme && !has("--scheme")) s.scheme = *c.scheme;
  if (c.threads && !has("--threads")) s.threads = *c.threads;
  if (c.output_dir && !has("--out")) s.out = *c.output_dir;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw PreconditionError(flag + " is required (flag or config file)");
}

void require_file(const std::string& path, const std::string& flag) {
  require(path, flag);
  if (!fs::is_regular_file(path)) throw PreconditionError("no such file", ErrorContext{path, {}, {}});
}

ParallelCorpus load_corpus(const CorpusArgs& a) {
  require_file(a.path, "--corpus");
  IngestOptions o;
  if (!a.languages.empty()) o.languages = parse_language_list(a.languages);
  o.partial_rows = a.quarantine ? PartialRowPolicy::quarantine : PartialRowPolicy::strict;
  auto split = parse_split(a.split);
  if (!split) throw PreconditionError("unknown split '" + a.split + "'");
  o.evaluation_split = *split;
  return ingest_corpus(fs::path(a.path), o);
}

Membership membership_of(const std::string& s) {
  auto m = parse_membership(s);
  if (!m) throw PreconditionError("unknown membership '" + s + "' (primary|all_matches)");
  return *m;
}

std::optional<ProfileSet> load_langid(const MatchArgs& a, const ParallelCorpus& corpus) {
  if (!a.profiles.empty()) {
    require_file(a.profiles, "--profiles");
    return load_profiles(a.profiles);
  }
  if (a.langid) return build_profiles(corpus);
  return std::nullopt;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing", ErrorContext{path.string(), {}, {}});
  f << text;
  if (!f) throw Error("write failed", ErrorContext{path.string(), {}, {}});
}

std::set<ReportFormat> parse_formats(const std::string& list) {
  std::set<ReportFormat> out;
  std::istringstream ss(list);
  for (std::string f; std::getline(ss, f, ',');) {
    auto r = parse_report_format(f);
    if (!r) throw PreconditionError("unknown format '" + f + "' (md|csv|json|svg)");
    out.insert(*r);
  }
  if (out.empty()) throw PreconditionError("no output format given");
  return out;
}

std::vector<LanguageCode> language_order(const std::string& order) {
  return order.empty() ? default_language_order() : parse_language_list(order);
}

/// Verdicts grouped by (model tag, input language).
using VerdictGroups = std::map<std::pair<std::string, LanguageCode>, std::vector<Verdict>>;

VerdictGroups judge_logs(const Shared& s, const ParallelCorpus& corpus, const ProfileSet* profiles,
                         std::vector<Verdict>* all) {
  MatcherOptions mo;
  mo.reference_language = LanguageCode::parse(s.match.reference);
  mo.langid.threshold = s.match.langid_threshold;
  VerdictGroups groups;
  if (s.match.logs.empty()) throw PreconditionError("--log is required (flag or config file)");
  for (const auto& log : s.match.logs) {
    require_file(log, "--log");
    const auto records = read_generation_log(fs::path(log));
    for (const auto& r : records) {
      Verdict v;
      try {
        v = judge(r, corpus, profiles, mo);
      } catch (const Error& e) {
        throw Error(e.message(), ErrorContext{log, r.line, r.question_id});
      }
      if (!s.match.model.empty()) v.model_tag = s.match.model;
      if (all) all->push_back(v);
      groups[{v.model_tag, v.input_language}].push_back(std::move(v));
    }
  }
  return groups;
}

std::vector<fs::path> provenance_inputs(const Shared& s) {
  std::vector<fs::path> in{s.corpus.path};
  for (const auto& l : s.match.logs) in.emplace_back(l);
  if (!s.match.profiles.empty()) in.emplace_back(s.match.profiles);
  return in;
}

void write_metrics(const fs::path& dir, const MetricsFile& f) {
  write_file(dir / "metrics.json", to_json(f).dump(2) + "\n");
  std::ostringstream csv;
  write_language_results_csv(csv, f.languages);
  write_file(dir / "metrics.csv", csv.str());
}

// ---------- subcommands ----------

int cmd_ingest(Shared& s) {
  const ParallelCorpus corpus = load_corpus(s.corpus);
  nlohmann::json summary{{"version", kVersion},
                         {"corpus", s.corpus.path},
                         {"questions", corpus.question_count()},
                         {"items", corpus.item_count()},
                         {"evaluation_split", std::string(to_string(corpus.evaluation_split()))}};
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : corpus.languages()) langs.push_back(l.str());
  summary["languages"] = langs;
  nlohmann::json splits = nlohmann::json::object();
  for (auto sp : {Split::train, Split::validation, Split::test}) splits[std::string(to_string(sp))] = corpus.ids(sp).size();
  summary["splits"] = splits;
  summary["quarantined"] = corpus.quarantined();
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : corpus.warnings()) {
    warnings.push_back({{"question_id", w.question_id}, {"language", w.language.str()}, {"message", w.message}});
  }
  summary["warnings"] = warnings;
  const LanguageCode ref = LanguageCode::parse(s.match.reference);
  nlohmann::json filtered = nlohmann::json::object();
  if (corpus.has_language(ref) && !corpus.evaluation_ids().empty()) {
    for (const auto& l : corpus.languages()) {
      if (l != ref) filtered[l.str()] = build_filtered_subset(corpus, l, ref).question_ids.size();
    }
  }
  summary["filtered_subset_sizes"] = filtered;
  if (!s.profiles_out.empty()) {
    save_profiles(build_profiles(corpus), s.profiles_out);
    summary["profiles"] = s.profiles_out;
  }
  if (!s.out.empty()) write_file(fs::path(s.out) / "corpus_summary.json", summary.dump(2) + "\n");
  std::cout << "ingested " << corpus.question_count() << " questions x " << corpus.languages().size()
            << " languages = " << corpus.item_count() << " items; quarantined " << corpus.quarantined().size()
            << "; warnings " << corpus.warnings().size() << '\n';
  return 0;
}

MetricsFile language_metrics(Shared& s, bool full_scope, bool filtered_scope) {
  const ParallelCorpus corpus = load_corpus(s.corpus);
  const auto profiles = load_langid(s.match, corpus);
  std::vector<Verdict> all;
  const VerdictGroups groups = judge_logs(s, corpus, profiles ? &*profiles : nullptr, &all);
  const Membership membership = membership_of(s.match.membership);
  const LanguageCode ref = LanguageCode::parse(s.match.reference);
  const IdSet eval = corpus.evaluation_ids();

  MetricsFile f;
  f.version = kVersion;
  f.provenance = provenance_json(provenance_inputs(s));
  for (const auto& [key, verdicts] : groups) {
    const auto& [tag, input] = key;
    if (full_scope) {
      f.languages.push_back(language_result(verdicts, input, eval, Scope::full, membership, ref, tag, s.match.variant));
    }
    if (filtered_scope && input != ref) {
      const FilteredSubset subset = build_filtered_subset(corpus, input, ref);
      std::vector<Verdict> kept;
      for (const auto& v : verdicts) {
        if (subset.question_ids.contains(v.question_id)) kept.push_back(v);
      }
      f.languages.push_back(
          language_result(kept, input, subset.question_ids, Scope::filtered, membership, ref, tag, s.match.variant));
      if (!s.out.empty()) {
        std::string ids;
        for (const auto& id : subset.question_ids) ids += id + "\n";
        write_file(fs::path(s.out) / ("filtered_" + input.str() + ".txt"), ids);
      }
    }
  }
  if (!s.match.emit_verdicts.empty()) {
    std::ostringstream v;
    write_verdicts(v, all);
    write_file(s.match.emit_verdicts, v.str());
  }
  return f;
}

void print_language_results(const MetricsFile& f) {
  for (const auto& r : f.languages) {
    const auto& c = r.report;
    std::cout << r.model_tag << (r.variant.empty() ? "" : " " + r.variant) << " " << c.input_language.str() << " ["
              << to_string(r.scope) << ", n=" << c.universe << "] ratio="
              << (c.ratio_general.defined() ? format_fraction_as_percent(*c.ratio_general.value())
                                            : std::string("undefined"))
              << " acc=" << format_fraction_as_percent(c.cumulative_accuracy)
              << " acc_" << c.input_language.str() << "=" << format_fraction_as_percent(c.input_language_accuracy);
    if (r.langid_checked) std::cout << " langid_disagreements=" << r.langid_disagreements;
    std::cout << '\n';
  }
}

int cmd_evaluate(Shared& s) {
  require(s.out, "--out");
  const MetricsFile f = language_metrics(s, true, true);
  write_metrics(s.out, f);
  ReportBundle b;
  b.provenance = f.provenance;
  const auto order = language_order(s.order);
  const auto entries = cococola_entries_from_metrics(f.languages, Scope::full);
  if (!entries.empty()) {
    b.cococola = render_cococola_table(entries, order);
    b.cococola_scope = "full";
  }
  write_report(b, parse_formats("md,csv,json"), s.out);
  print_language_results(f);
  return 0;
}

int cmd_cococola(Shared& s) {
  require(s.out, "--out");
  const MetricsFile f = language_metrics(s, false, true);
  if (f.languages.empty()) throw PreconditionError("no non-reference input language in the logs");
  write_metrics(s.out, f);
  print_language_results(f);
  return 0;
}

int cmd_overlap(Shared& s) {
  require(s.out, "--out");
  const ParallelCorpus corpus = load_corpus(s.corpus);
  const VerdictGroups groups = judge_logs(s, corpus, nullptr, nullptr);
  std::map<std::string, std::map<LanguageCode, IdSet>> by_model;
  for (const auto& [key, verdicts] : groups) {
    auto& set = by_model[key.first][key.second];
    for (const auto& v : verdicts) {
      if (v.label == VerdictLabel::correct_input_lang) set.insert(v.question_id);
    }
  }
  MetricsFile f;
  f.version = kVersion;
  f.provenance = provenance_json(provenance_inputs(s));
  ReportBundle b;
  b.provenance = f.provenance;
  const auto wanted = language_order(s.order);
  for (const auto& [tag, sets] : by_model) {
    std::vector<LanguageCode> order;
    for (const auto& l : wanted) {
      if (sets.contains(l)) order.push_back(l);
    }
    std::vector<LanguageCode> rest;
    for (const auto& [l, ids] : sets) {
      if (std::find(order.begin(), order.end(), l) == order.end()) rest.push_back(l);
    }
    for (const auto& l : in_display_order(rest)) order.push_back(l);
    OverlapMatrix m = overlap_matrix(sets, order);
    f.overlaps.push_back({tag, s.match.variant, m});
    b.overlaps.emplace_back(tag, m);
    std::cout << tag << ": overlap over " << order.size() << " languages\n";
  }
  write_file(fs::path(s.out) / "metrics.json", to_json(f).dump(2) + "\n");
  write_report(b, parse_formats("csv,svg"), s.out);
  return 0;
}

int cmd_diff(Shared& s) {
  require_file(s.base, "--base");
  require_file(s.tuned, "--tuned");
  require(s.out, "--out");
  const NamingScheme scheme = load_scheme(s.scheme);
  const Manifest base = read_manifest(s.base);
  const Manifest tuned = read_manifest(s.tuned);
  const DiffResult r = diff_checkpoints(base, tuned, scheme, DiffOptions{s.threads, s.chunk});
  const fs::path dir(s.out);
  std::ostringstream matrix, entries;
  write_matrix_csv(matrix, r.matrix);
  write_entries_csv(entries, r.entries);
  write_file(dir / "matrix.csv", matrix.str());
  write_file(dir / "entries.csv", entries.str());
  if (!r.matrix.empty()) {
    write_file(dir / "heatmap.svg", render_heatmap_svg(heatmap_from_diff(r.matrix, "Mean absolute update")));
  }
  std::size_t other = 0;
  for (const auto& e : r.entries) other += e.kind == ModuleKind::other ? 1 : 0;
  std::cout << "diffed " << r.entries.size() << " tensors over " << r.matrix.layer_count() << " layers";
  if (other) std::cout << " (" << other << " classified as other)";
  std::cout << '\n';
  return 0;
}

FreezePlan build_plan(const Shared& s, const Manifest& manifest, const NamingScheme& scheme) {
  if (s.mode == "final-k") return plan_final_layers(manifest.tensors, scheme, s.k, s.include_head);
  if (s.mode == "matched-prefix") {
    FreezePlan reference;
    if (!s.reference_plan.empty()) {
      require_file(s.reference_plan, "--reference-plan");
      reference = read_plan(s.reference_plan).plan;
    } else if (s.reference_k > 0) {
      reference = plan_final_layers(manifest.tensors, scheme, s.reference_k, s.include_head);
    } else {
      throw PreconditionError("matched-prefix needs --reference-plan or --reference-k");
    }
    return plan_matched_prefix(manifest.tensors, scheme, reference, s.include_head);
  }
  if (s.mode == "top-delta") {
    require_file(s.matrix, "--matrix");
    return plan_from_delta(read_matrix_csv(fs::path(s.matrix)), manifest.tensors, scheme, s.fraction, s.include_head);
  }
  if (s.mode == "explicit") {
    require(s.layers, "--layers");
    std::vector<LayerRange> ranges;
    std::istringstream ss(s.layers);
    for (std::string r; std::getline(ss, r, ',');) ranges.push_back(parse_layer_range(r));
    return plan_explicit(manifest.tensors, scheme, ranges, s.include_head);
  }
  throw PreconditionError("unknown mode '" + s.mode + "' (final-k|matched-prefix|top-delta|explicit)");
}

int cmd_plan(Shared& s) {
  require_file(s.manifest, "--manifest");
  require(s.plan_out, "--out");
  const NamingScheme scheme = load_scheme(s.scheme);
  const Manifest manifest = read_any_manifest(s.manifest);
  FreezePlan plan;
  try {
    plan = build_plan(s, manifest, scheme);
  } catch (const PlanError& e) {
    if (!e.context().file.empty()) throw;
    throw PlanError(e.message(), ErrorContext{s.manifest, {}, e.context().item});
  }
  TrainConfigTemplate t;
  if (s.balanced > 0) t.balanced_multilingual_per_language = s.balanced;
  emit_plan(plan, t, s.plan_out);
  std::cout << to_string(plan.rationale) << ": trainable layers (1-indexed) " << render_ranges(plan.trainable_layers)
            << "; " << plan.trainable_param_count << " of " << plan.total_param_count << " parameters";
  if (plan.overshoot) std::cout << "; overshoot " << *plan.overshoot;
  std::cout << '\n';
  return 0;
}

int cmd_report(Shared& s) {
  require(s.out, "--out");
  const auto formats = parse_formats(s.formats);
  const auto order = language_order(s.order);
  auto scope = parse_scope(s.scope);
  if (!scope) throw PreconditionError("unknown scope '" + s.scope + "' (filtered|full)");

  ReportBundle b;
  std::vector<fs::path> inputs;
  std::vector<LanguageResult> results;
  for (const auto& m : s.metrics) {
    require_file(m, "--metrics");
    inputs.emplace_back(m);
    MetricsFile f = read_metrics(m);
    results.insert(results.end(), f.languages.begin(), f.languages.end());
    for (auto& o : f.overlaps) {
      b.overlaps.emplace_back(o.variant.empty() ? o.model_tag : o.model_tag + " " + o.variant, o.matrix);
    }
  }
  std::vector<AccuracyRow> acc_rows = accuracy_rows_from_metrics(results);
  for (const auto& a : s.accuracy) {
    require_file(a, "--accuracy");
    inputs.emplace_back(a);
    auto rows = read_accuracy_csv(fs::path(a));
    acc_rows.insert(acc_rows.end(), rows.begin(), rows.end());
  }
  if (!acc_rows.empty()) b.accuracy = render_accuracy_table(acc_rows, order);
  const auto entries = cococola_entries_from_metrics(results, *scope);
  if (!entries.empty()) {
    b.cococola = render_cococola_table(entries, order);
    b.cococola_scope = std::string(to_string(*scope));
  }
  for (const auto& d : s.diffs) {
    require_file(d, "--diff");
    inputs.emplace_back(d);
    b.heatmaps.emplace_back(fs::path(d).stem().string(), read_matrix_csv(fs::path(d)));
  }
  b.provenance = provenance_json(inputs);
  const auto written = write_report(b, formats, s.out);
  for (const auto& p : written) std::cout << p.generic_string() << '\n';
  return 0;
}

int cmd_synth(Shared& s) {
  require(s.out, "--out");
  const ParallelCorpus corpus = load_corpus(s.corpus);
  SynthOptions o;
  o.count = s.count;
  o.seed = s.seed;
  if (!s.match.model.empty()) o.model_tag = s.match.model;
  o.reference_language = LanguageCode::parse(s.match.reference);
  const auto planted = synthesize_log(corpus, LanguageCode::parse(s.input_language), o);
  std::vector<GenerationRecord> records;
  std::ostringstream labels;
  for (const auto& p : planted) {
    records.push_back(p.record);
    labels << nlohmann::json{{"question_id", p.record.question_id}, {"label", std::string(to_string(p.label))}}.dump()
           << '\n';
  }
  std::ostringstream log;
  write_generation_log(log, records);
  write_file(s.out, log.str());
  if (!s.labels_out.empty()) write_file(s.labels_out, labels.str());
  std::cout << "wrote " << records.size() << " records\n";
  return 0;
}

void add_corpus_options(CLI::App* c, Shared& s) {
  c->add_option("--corpus", s.corpus.path, "Parallel QA corpus (JSONL)");
  c->add_option("--languages", s.corpus.languages, "Declared languages, comma separated (default: inferred)");
  auto* strict = c->add_flag("--strict", s.corpus.strict, "Reject questions missing a language (default)");
  c->add_flag("--quarantine", s.corpus.quarantine, "Drop questions missing a language")->excludes(strict);
  c->add_option("--split", s.corpus.split, "Evaluation split (train|validation|test)");
}

void add_match_options(CLI::App* c, Shared& s, bool langid) {
  c->add_option("--log", s.match.logs, "Generation log(s) (JSONL)");
  c->add_option("--model", s.match.model, "Override the model tag of every record");
  c->add_option("--variant", s.match.variant, "Variant label stored with results (e.g. plm, sft)");
  c->add_option("--reference", s.match.reference, "Reference language");
  c->add_option("--membership", s.match.membership, "Correct-set membership: primary|all_matches");
  if (langid) {
    c->add_option("--profiles", s.match.profiles, "Language-ID profiles (JSON)");
    c->add_flag("--langid", s.match.langid, "Build language-ID profiles from the corpus training split");
    c->add_option("--langid-threshold", s.match.langid_threshold, "Minimum language-ID margin");
    c->add_option("--emit-verdicts", s.match.emit_verdicts, "Write per-record verdicts (JSONL)");
  }
  c->add_option("--order", s.order, "Language order for tables, comma separated");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-adherence metrics, checkpoint diffs and freeze plans"};
  app.set_version_flag("--version", std::string("cocola ") + kVersion);
  app.require_subcommand(1);
  Shared s;
  app.add_option("--config", s.config, "INI run configuration")->check(CLI::ExistingFile);

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and summarise it");
  add_corpus_options(ingest, s);
  ingest->add_option("--reference", s.match.reference, "Reference language");
  ingest->add_option("--profiles-out", s.profiles_out, "Write language-ID profiles built from the training split");
  ingest->add_option("--out", s.out, "Directory for corpus_summary.json");

  auto* evaluate = app.add_subcommand("evaluate", "Judge generation logs and compute metrics");
  add_corpus_options(evaluate, s);
  add_match_options(evaluate, s, true);
  evaluate->add_option("--out", s.out, "Output directory");

  auto* cococola = app.add_subcommand("cococola", "Ratio and accuracy on the filtered subset");
  add_corpus_options(cococola, s);
  add_match_options(cococola, s, true);
  cococola->add_option("--out", s.out, "Output directory");

  auto* overlap = app.add_subcommand("overlap", "Cross-language answer overlap");
  add_corpus_options(overlap, s);
  add_match_options(overlap, s, false);
  overlap->add_option("--out", s.out, "Output directory");

  auto* diff = app.add_subcommand("diff", "Per-layer mean absolute update between two checkpoints");
  diff->add_option("--base", s.base, "Base checkpoint");
  diff->add_option("--tuned", s.tuned, "Fine-tuned checkpoint");
  diff->add_option("--scheme", s.scheme, "Naming scheme: llama|gemma|toy or a JSON file");
  diff->add_option("--threads", s.threads, "Worker threads (0: all cores)");
  diff->add_option("--chunk", s.chunk, "Elements per streamed chunk");
  diff->add_option("--out", s.out, "Output directory");

  auto* plan = app.add_subcommand("plan", "Emit a freeze plan");
  plan->add_option("--manifest", s.manifest, "Checkpoint or header JSON");
  plan->add_option("--scheme", s.scheme, "Naming scheme: llama|gemma|toy or a JSON file");
  plan->add_option("--mode", s.mode, "final-k|matched-prefix|top-delta|explicit")->required();
  plan->add_option("--k", s.k, "Final layers to train (final-k)");
  plan->add_option("--reference-k", s.reference_k, "Final-k reference for matched-prefix");
  plan->add_option("--reference-plan", s.reference_plan, "Final-k plan file for matched-prefix");
  plan->add_option("--fraction", s.fraction, "Share of layers to train (top-delta)");
  plan->add_option("--matrix", s.matrix, "Diff matrix CSV (top-delta)");
  plan->add_option("--layers", s.layers, "1-indexed inclusive ranges, e.g. 15-28 (explicit)");
  plan->add_flag("--include-head", s.include_head, "Also train the output head");
  plan->add_option("--balanced-multilingual", s.balanced, "Examples per language for balanced multilingual data")
      ->expected(0, 1)
      ->default_str("200");
  plan->add_option("--out", s.plan_out, "Plan file to write");

  auto* report = app.add_subcommand("report", "Render tables and figures");
  report->add_option("--metrics", s.metrics, "Metrics JSON file(s)");
  report->add_option("--diff", s.diffs, "Diff matrix CSV file(s)");
  report->add_option("--accuracy", s.accuracy, "Accuracy CSV file(s): model,language,plm,sft");
  report->add_option("--format", s.formats, "Comma separated: md,csv,json,svg");
  report->add_option("--scope", s.scope, "Ratio table scope: filtered|full");
  report->add_option("--order", s.order, "Language order, comma separated");
  report->add_option("--out", s.out, "Output directory");

  auto* synth = app.add_subcommand("synth-log", "Write a constructed generation log with planted labels");
  add_corpus_options(synth, s);
  synth->add_option("--input-language", s.input_language, "Input language of the records");
  synth->add_option("--count", s.count, "Number of records");
  synth->add_option("--seed", s.seed, "Random seed");
  synth->add_option("--model", s.match.model, "Model tag");
  synth->add_option("--reference", s.match.reference, "Reference language");
  synth->add_option("--labels-out", s.labels_out, "Planted labels (JSONL)");
  synth->add_option("--out", s.out, "Log file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    apply_config(s, sub);
    if (plan->parsed() && plan->count("--balanced-multilingual") && s.balanced == 0) s.balanced = 200;
    if (name == "ingest") return cmd_ingest(s);
    if (name == "evaluate") return cmd_evaluate(s);
    if (name == "cococola") return cmd_cococola(s);
    if (name == "overlap") return cmd_overlap(s);
    if (name == "diff") return cmd_diff(s);
    if (name == "plan") return cmd_plan(s);
    if (name == "report") return cmd_report(s);
    if (name == "synth-log") return cmd_synth(s);
  } catch (const std::exception& e) {
    std::cerr << "cocola " << name << ": " << e.what() << '\n';
    return 1;
  }
  return 1;
}
