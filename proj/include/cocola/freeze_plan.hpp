#pragma once

// Freeze plans: which parameters of a checkpoint stay trainable during
// partial fine-tuning, chosen by layer range, by matched parameter count or
// by the per-layer MLP update magnitude.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/checkpoint_diff.hpp"
#include "cocola/error.hpp"
#include "cocola/naming_scheme.hpp"
#include "cocola/safetensors.hpp"

namespace cocola {

/// Inclusive, 0-indexed block range.
struct LayerRange {
  int start = 0;
  int end = 0;

  /// "11-16" for {10..15}.
  std::string one_indexed() const {
    return start == end ? std::to_string(start + 1) : std::to_string(start + 1) + "-" + std::to_string(end + 1);
  }
  /// Half-open 0-indexed slice, "10:16" for {10..15}.
  std::string slice() const { return std::to_string(start) + ":" + std::to_string(end + 1); }

  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

/// Parses "11-16" (1-indexed, inclusive) or a single "7".
inline LayerRange parse_layer_range(std::string_view text) {
  auto fail = [&] { throw PlanError("invalid layer range '" + std::string(text) + "' (expected e.g. 11-16)"); };
  auto to_int = [&](std::string_view s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string_view::npos) fail();
    return std::stoi(std::string(s));
  };
  const auto dash = text.find('-');
  const int a = to_int(text.substr(0, dash));
  const int b = dash == std::string_view::npos ? a : to_int(text.substr(dash + 1));
  if (a < 1 || b < a) fail();
  return {a - 1, b - 1};
}

/// Collapses a sorted set of layer indices into maximal contiguous ranges.
inline std::vector<LayerRange> contiguous_ranges(const std::set<int>& layers) {
  std::vector<LayerRange> out;
  for (int l : layers) {
    if (!out.empty() && out.back().end + 1 == l) {
      out.back().end = l;
    } else {
      out.push_back({l, l});
    }
  }
  return out;
}

inline std::string render_ranges(const std::set<int>& layers, bool slice = false) {
  std::string s;
  for (const auto& r : contiguous_ranges(layers)) {
    if (!s.empty()) s += ",";
    s += slice ? r.slice() : r.one_indexed();
  }
  return s;
}

enum class PlanRationale { final_k, matched_prefix, explicit_ranges, top_delta };

inline std::string_view to_string(PlanRationale r) {
  switch (r) {
    case PlanRationale::final_k: return "final_k";
    case PlanRationale::matched_prefix: return "matched_prefix";
    case PlanRationale::explicit_ranges: return "explicit";
    case PlanRationale::top_delta: return "top_delta";
  }
  return "?";
}

inline std::optional<PlanRationale> parse_rationale(std::string_view s) {
  for (auto r : {PlanRationale::final_k, PlanRationale::matched_prefix, PlanRationale::explicit_ranges,
                 PlanRationale::top_delta}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

struct TrainConfigTemplate {
  int num_epochs = 3;
  int save_steps = 100;
  int eval_steps = 100;
  int logging_steps = 100;
  int batch_size = 64;
  int gradient_accumulation = 1;
  double weight_decay = 0.01;
  bool bf16 = true;
  int seed = 42;
  double learning_rate = 5e-6;
  double dropout = 0.1;
  /// Examples per language for balanced multilingual partial training.
  std::optional<int> balanced_multilingual_per_language;

  friend bool operator==(const TrainConfigTemplate&, const TrainConfigTemplate&) = default;
};

struct FreezePlan {
  std::string scheme;
  int layer_count = 0;
  PlanRationale rationale = PlanRationale::explicit_ranges;
  std::string rationale_detail;
  bool include_head = false;
  std::set<int> trainable_layers;
  std::map<std::string, bool> trainable;
  std::map<std::string, std::uint64_t> parameter_counts;
  std::uint64_t trainable_param_count = 0;
  std::uint64_t total_param_count = 0;
  /// matched_prefix only: the count being matched and how far the plan exceeds it.
  std::optional<std::uint64_t> reference_param_count;
  std::optional<std::uint64_t> overshoot;

  std::set<std::string> trainable_names() const {
    std::set<std::string> out;
    for (const auto& [n, t] : trainable) {
      if (t) out.insert(n);
    }
    return out;
  }

  friend bool operator==(const FreezePlan&, const FreezePlan&) = default;
};

namespace detail {

struct ClassifiedTensor {
  std::string name;
  ParameterClass cls;
  std::uint64_t n = 0;
};

inline std::vector<ClassifiedTensor> classify_manifest(std::span<const TensorMeta> manifest, const NamingScheme& scheme) {
  std::vector<ClassifiedTensor> out;
  std::set<std::string> seen;
  for (const auto& t : manifest) {
    if (!seen.insert(t.name).second) throw PlanError("duplicate parameter name", ErrorContext{{}, {}, t.name});
    out.push_back({t.name, scheme.classify(t.name), t.element_count()});
  }
  return out;
}

inline int layer_count_of(const std::vector<ClassifiedTensor>& tensors) {
  int layers = 0;
  for (const auto& t : tensors) {
    if (t.cls.layer) layers = std::max(layers, *t.cls.layer + 1);
  }
  if (layers == 0) throw PlanError("no parameter carries a layer index under this naming scheme");
  return layers;
}

inline std::map<int, std::uint64_t> per_layer_counts(const std::vector<ClassifiedTensor>& tensors) {
  std::map<int, std::uint64_t> out;
  for (const auto& t : tensors) {
    if (t.cls.layer) out[*t.cls.layer] += t.n;
  }
  return out;
}

inline FreezePlan assemble(const std::vector<ClassifiedTensor>& tensors, const NamingScheme& scheme, int layer_count,
                           const std::set<int>& layers, PlanRationale rationale, bool include_head) {
  FreezePlan p;
  p.scheme = scheme.name();
  p.layer_count = layer_count;
  p.rationale = rationale;
  p.include_head = include_head;
  p.trainable_layers = layers;
  for (const auto& t : tensors) {
    const bool on = t.cls.layer ? layers.contains(*t.cls.layer) : (include_head && t.cls.kind == ModuleKind::head);
    p.trainable[t.name] = on;
    p.parameter_counts[t.name] = t.n;
    p.total_param_count += t.n;
    if (on) p.trainable_param_count += t.n;
  }
  return p;
}

inline std::string head_note(bool include_head) { return include_head ? "; head trainable" : ""; }

}  // namespace detail

/// Trains blocks layer_count-k .. layer_count-1.
inline FreezePlan plan_final_layers(std::span<const TensorMeta> manifest, const NamingScheme& scheme, int k,
                                    bool include_head = false) {
  const auto tensors = detail::classify_manifest(manifest, scheme);
  const int layers = detail::layer_count_of(tensors);
  if (k < 1 || k > layers) {
    throw PlanError("k=" + std::to_string(k) + " outside [1, " + std::to_string(layers) + "]");
  }
  std::set<int> chosen;
  for (int l = layers - k; l < layers; ++l) chosen.insert(l);
  FreezePlan p = detail::assemble(tensors, scheme, layers, chosen, PlanRationale::final_k, include_head);
  p.rationale_detail = "final " + std::to_string(k) + " of " + std::to_string(layers) + " layers (1-indexed " +
                       render_ranges(chosen) + ")" + detail::head_note(include_head);
  return p;
}

/// Adds blocks 0, 1, 2, ... until the trainable count reaches the reference plan's.
inline FreezePlan plan_matched_prefix(std::span<const TensorMeta> manifest, const NamingScheme& scheme,
                                      const FreezePlan& reference, bool include_head = false) {
  if (reference.rationale != PlanRationale::final_k) throw PlanError("reference plan must be a final-k plan");
  const auto tensors = detail::classify_manifest(manifest, scheme);
  const int layers = detail::layer_count_of(tensors);
  if (reference.layer_count != layers) {
    throw PlanError("reference plan has " + std::to_string(reference.layer_count) + " layers, manifest has " +
                    std::to_string(layers));
  }
  const std::uint64_t target = reference.trainable_param_count;
  const auto per_layer = detail::per_layer_counts(tensors);

  std::set<int> chosen;
  FreezePlan p = detail::assemble(tensors, scheme, layers, chosen, PlanRationale::matched_prefix, include_head);
  std::uint64_t count = p.trainable_param_count;
  for (int l = 0; l < layers && count < target; ++l) {
    chosen.insert(l);
    auto it = per_layer.find(l);
    if (it != per_layer.end()) count += it->second;
  }
  if (count < target) {
    throw PlanError("reference count " + std::to_string(target) + " exceeds what all " + std::to_string(layers) +
                    " layers provide (" + std::to_string(count) + ")");
  }
  p = detail::assemble(tensors, scheme, layers, chosen, PlanRationale::matched_prefix, include_head);
  p.reference_param_count = target;
  p.overshoot = p.trainable_param_count - target;
  p.rationale_detail = "first " + std::to_string(chosen.size()) + " layers (1-indexed " + render_ranges(chosen) +
                       ") matching " + std::to_string(target) + " parameters of the reference plan" +
                       detail::head_note(include_head);
  return p;
}

/// Trains the ceil(fraction * layer_count) layers with the largest MLP update.
/// Equal deltas prefer the higher layer index.
inline FreezePlan plan_from_delta(const DiffMatrix& matrix, std::span<const TensorMeta> manifest,
                                  const NamingScheme& scheme, double fraction, bool include_head = false) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw PlanError("fraction must lie in (0, 1]");
  const auto tensors = detail::classify_manifest(manifest, scheme);
  const int layers = detail::layer_count_of(tensors);
  if (matrix.layer_count() != layers) {
    throw PlanError("matrix has " + std::to_string(matrix.layer_count()) + " layers, manifest has " +
                    std::to_string(layers));
  }
  if (!matrix.has_kind(ModuleKind::mlp)) throw PlanError("matrix has no mlp row");

  std::vector<std::pair<double, int>> ranked;
  for (int l = 0; l < layers; ++l) {
    auto v = matrix.at(ModuleKind::mlp, l);
    if (!v) throw PlanError("mlp row has no value for layer " + std::to_string(l + 1) + " (1-indexed)");
    ranked.emplace_back(*v, l);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second > b.second;
  });
  // Absorbs rounding noise such as 0.1 * 30 = 3.0000000000000004.
  const double scaled = fraction * layers;
  int take = static_cast<int>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
  take = std::clamp(take, 1, layers);

  std::set<int> chosen;
  for (int i = 0; i < take; ++i) chosen.insert(ranked[static_cast<std::size_t>(i)].second);
  FreezePlan p = detail::assemble(tensors, scheme, layers, chosen, PlanRationale::top_delta, include_head);
  std::ostringstream note;
  note << "top " << take << " of " << layers << " layers by mlp update (1-indexed " << render_ranges(chosen)
      << ", slice " << render_ranges(chosen, true) << ")" << detail::head_note(include_head);
  p.rationale_detail = note.str();
  return p;
}

/// Trains exactly the listed 0-indexed inclusive ranges.
inline FreezePlan plan_explicit(std::span<const TensorMeta> manifest, const NamingScheme& scheme,
                                std::span<const LayerRange> ranges, bool include_head = false) {
  const auto tensors = detail::classify_manifest(manifest, scheme);
  const int layers = detail::layer_count_of(tensors);
  if (ranges.empty()) throw PlanError("no layer ranges given");
  std::set<int> chosen;
  for (const auto& r : ranges) {
    if (r.start < 0 || r.end < r.start || r.end >= layers) {
      throw PlanError("layer range " + r.one_indexed() + " (1-indexed) outside a " + std::to_string(layers) +
                      "-layer model");
    }
    for (int l = r.start; l <= r.end; ++l) chosen.insert(l);
  }
  FreezePlan p = detail::assemble(tensors, scheme, layers, chosen, PlanRationale::explicit_ranges, include_head);
  p.rationale_detail = "explicit layers (1-indexed " + render_ranges(chosen) + ")" + detail::head_note(include_head);
  return p;
}

// ---------- plan files ----------

inline nlohmann::json train_config_to_json(const TrainConfigTemplate& t) {
  nlohmann::json j{{"num_epochs", t.num_epochs},
                   {"save_steps", t.save_steps},
                   {"eval_steps", t.eval_steps},
                   {"logging_steps", t.logging_steps},
                   {"batch_size", t.batch_size},
                   {"gradient_accumulation", t.gradient_accumulation},
                   {"weight_decay", t.weight_decay},
                   {"bf16", t.bf16},
                   {"seed", t.seed},
                   {"learning_rate", t.learning_rate},
                   {"dropout", t.dropout}};
  if (t.balanced_multilingual_per_language) {
    j["balanced_multilingual"] = {{"per_language_examples", *t.balanced_multilingual_per_language}};
  }
  return j;
}

inline TrainConfigTemplate train_config_from_json(const nlohmann::json& j) {
  TrainConfigTemplate t;
  t.num_epochs = j.at("num_epochs").get<int>();
  t.save_steps = j.at("save_steps").get<int>();
  t.eval_steps = j.at("eval_steps").get<int>();
  t.logging_steps = j.at("logging_steps").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.gradient_accumulation = j.at("gradient_accumulation").get<int>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.bf16 = j.at("bf16").get<bool>();
  t.seed = j.at("seed").get<int>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.dropout = j.at("dropout").get<double>();
  if (j.contains("balanced_multilingual")) {
    t.balanced_multilingual_per_language = j.at("balanced_multilingual").at("per_language_examples").get<int>();
  }
  return t;
}

inline nlohmann::json plan_to_json(const FreezePlan& p, const TrainConfigTemplate& t) {
  nlohmann::json counts{{"trainable", p.trainable_param_count}, {"total", p.total_param_count}};
  if (p.reference_param_count) counts["reference"] = *p.reference_param_count;
  if (p.overshoot) counts["overshoot"] = *p.overshoot;
  return {{"scheme", p.scheme},
          {"layer_count", p.layer_count},
          {"rationale", std::string(to_string(p.rationale))},
          {"rationale_detail", p.rationale_detail},
          {"include_head", p.include_head},
          {"trainable_layers", std::vector<int>(p.trainable_layers.begin(), p.trainable_layers.end())},
          {"trainable_layers_1_indexed", render_ranges(p.trainable_layers)},
          {"trainable_layers_slice", render_ranges(p.trainable_layers, true)},
          {"trainable", p.trainable},
          {"parameter_counts", p.parameter_counts},
          {"counts", counts},
          {"train_config", train_config_to_json(t)}};
}

struct PlanFile {
  FreezePlan plan;
  TrainConfigTemplate train_config;
};

inline PlanFile plan_from_json(const nlohmann::json& j, const std::string& source = "<plan>") {
  try {
    PlanFile f;
    FreezePlan& p = f.plan;
    p.scheme = j.at("scheme").get<std::string>();
    p.layer_count = j.at("layer_count").get<int>();
    auto r = parse_rationale(j.at("rationale").get<std::string>());
    if (!r) throw PlanError("unknown rationale", ErrorContext{source, {}, j.at("rationale").get<std::string>()});
    p.rationale = *r;
    p.rationale_detail = j.value("rationale_detail", std::string());
    p.include_head = j.value("include_head", false);
    for (int l : j.at("trainable_layers").get<std::vector<int>>()) p.trainable_layers.insert(l);
    p.trainable = j.at("trainable").get<std::map<std::string, bool>>();
    p.parameter_counts = j.at("parameter_counts").get<std::map<std::string, std::uint64_t>>();
    const auto& counts = j.at("counts");
    p.trainable_param_count = counts.at("trainable").get<std::uint64_t>();
    p.total_param_count = counts.at("total").get<std::uint64_t>();
    if (counts.contains("reference")) p.reference_param_count = counts.at("reference").get<std::uint64_t>();
    if (counts.contains("overshoot")) p.overshoot = counts.at("overshoot").get<std::uint64_t>();
    f.train_config = train_config_from_json(j.at("train_config"));
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw PlanError(std::string("invalid plan file: ") + e.what(), ErrorContext{source, {}, {}});
  }
}

/// Checks the partition and count invariants of a plan.
inline void validate_plan(const FreezePlan& p) {
  std::uint64_t trainable = 0, total = 0;
  for (const auto& [name, on] : p.trainable) {
    auto it = p.parameter_counts.find(name);
    if (it == p.parameter_counts.end()) throw PlanError("parameter without a count", ErrorContext{{}, {}, name});
    total += it->second;
    if (on) trainable += it->second;
  }
  if (p.parameter_counts.size() != p.trainable.size()) throw PlanError("count entries without a trainable flag");
  if (trainable != p.trainable_param_count || total != p.total_param_count) {
    throw PlanError("parameter counts disagree with the trainable mask");
  }
  for (int l : p.trainable_layers) {
    if (l < 0 || l >= p.layer_count) throw PlanError("trainable layer " + std::to_string(l) + " outside the model");
  }
}

inline std::string emit_plan_string(const FreezePlan& p, const TrainConfigTemplate& t) {
  validate_plan(p);
  return plan_to_json(p, t).dump(2) + "\n";
}

inline void emit_plan(const FreezePlan& p, const TrainConfigTemplate& t, const std::filesystem::path& out) {
  const std::string text = emit_plan_string(p, t);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw PlanError("cannot open plan file for writing", ErrorContext{out.string(), {}, {}});
  f << text;
  if (!f) throw PlanError("write failed", ErrorContext{out.string(), {}, {}});
}

inline PlanFile read_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlanError("cannot open plan file", ErrorContext{path.string(), {}, {}});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw PlanError(std::string("plan file is not valid JSON: ") + e.what(), ErrorContext{path.string(), {}, {}});
  }
  return plan_from_json(j, path.string());
}

}  // namespace cocola
