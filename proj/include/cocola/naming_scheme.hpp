#pragma once

// Parameter-name taxonomy: maps a dotted parameter path to a transformer
// layer index and a module kind. Bundled schemes cover Llama-style,
// Gemma-style and the toy trainer's names; custom schemes load from JSON.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/error.hpp"

namespace cocola {

enum class ModuleKind { attention, mlp, embedding, norm, head, other };

inline constexpr std::array<ModuleKind, 6> kAllModuleKinds{ModuleKind::attention, ModuleKind::mlp,
                                                           ModuleKind::embedding, ModuleKind::norm,
                                                           ModuleKind::head,      ModuleKind::other};

inline std::string_view to_string(ModuleKind k) {
  switch (k) {
    case ModuleKind::attention: return "attention";
    case ModuleKind::mlp: return "mlp";
    case ModuleKind::embedding: return "embedding";
    case ModuleKind::norm: return "norm";
    case ModuleKind::head: return "head";
    case ModuleKind::other: return "other";
  }
  return "?";
}

inline std::optional<ModuleKind> parse_module_kind(std::string_view s) {
  for (auto k : kAllModuleKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct ParameterClass {
  std::optional<int> layer;
  ModuleKind kind = ModuleKind::other;

  friend bool operator==(const ParameterClass&, const ParameterClass&) = default;
};

class NamingScheme {
 public:
  struct KindRule {
    ModuleKind kind;
    std::vector<std::string> patterns;
  };

  NamingScheme(std::string name, std::string layer_pattern, std::vector<KindRule> rules)
      : name_(std::move(name)), layer_pattern_(std::move(layer_pattern)), rules_(std::move(rules)) {
    try {
      layer_regex_ = std::regex(layer_pattern_, std::regex::ECMAScript);
      if (layer_regex_.mark_count() < 1) {
        throw SchemeError("layer pattern needs a capture group for the layer index", ErrorContext{name_, {}, {}});
      }
      for (const auto& r : rules_) {
        if (r.kind == ModuleKind::other) {
          throw SchemeError("'other' is the fallback kind and takes no patterns", ErrorContext{name_, {}, {}});
        }
        for (const auto& p : r.patterns) compiled_.emplace_back(r.kind, std::regex(p, std::regex::ECMAScript));
      }
    } catch (const std::regex_error& e) {
      throw SchemeError(std::string("invalid pattern: ") + e.what(), ErrorContext{name_, {}, {}});
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::string& layer_pattern() const noexcept { return layer_pattern_; }
  const std::vector<KindRule>& rules() const noexcept { return rules_; }

  /// Layer index (if the name is inside a numbered block) and module kind.
  /// Throws SchemeError when patterns of two different kinds match.
  ParameterClass classify(std::string_view name) const {
    const std::string s(name);
    ParameterClass out;
    std::smatch m;
    if (std::regex_search(s, m, layer_regex_)) out.layer = std::stoi(m[1].str());
    std::optional<ModuleKind> found;
    for (const auto& [kind, re] : compiled_) {
      if (!std::regex_search(s, re)) continue;
      if (found && *found != kind) {
        throw SchemeError("patterns for '" + std::string(to_string(*found)) + "' and '" +
                              std::string(to_string(kind)) + "' both match",
                          ErrorContext{name_, {}, s});
      }
      found = kind;
    }
    if (found) out.kind = *found;
    return out;
  }

  /// Classifies every name once so overlapping patterns fail before any work starts.
  void validate(std::span<const std::string> names) const {
    for (const auto& n : names) classify(n);
  }

 private:
  std::string name_;
  std::string layer_pattern_;
  std::vector<KindRule> rules_;
  std::regex layer_regex_;
  std::vector<std::pair<ModuleKind, std::regex>> compiled_;
};

inline ParameterClass classify_parameter(std::string_view name, const NamingScheme& scheme) {
  return scheme.classify(name);
}

inline NamingScheme llama_scheme() {
  return NamingScheme("llama", R"((?:^|\.)layers\.(\d+)\.)",
                      {{ModuleKind::attention, {R"(\.self_attn\.)"}},
                       {ModuleKind::mlp, {R"(\.mlp\.)"}},
                       {ModuleKind::norm, {R"(\.(input_layernorm|post_attention_layernorm)\.)", R"((^|\.)norm\.weight$)"}},
                       {ModuleKind::embedding, {R"((^|\.)embed_tokens\.)"}},
                       {ModuleKind::head, {R"((^|\.)lm_head\.)"}}});
}

/// Gemma-3 language-model names; vision-tower tensors fall through to "other".
inline NamingScheme gemma_scheme() {
  return NamingScheme(
      "gemma", R"((?:^|\.)model\.layers\.(\d+)\.)",
      {{ModuleKind::attention, {R"((^|\.)model\.layers\.\d+\.self_attn\.)"}},
       {ModuleKind::mlp, {R"((^|\.)model\.layers\.\d+\.mlp\.)"}},
       {ModuleKind::norm,
        {R"(\.(input_layernorm|post_attention_layernorm|pre_feedforward_layernorm|post_feedforward_layernorm)\.)",
         R"((^|\.)model\.norm\.weight$)"}},
       {ModuleKind::embedding, {R"((^|\.)model\.embed_tokens\.)"}},
       {ModuleKind::head, {R"((^|\.)lm_head\.)"}}});
}

/// Names written by the toy trainer: layers.{i}.attn.*, layers.{i}.mlp.*,
/// layers.{i}.ln{1,2}.*, embed.*, ln_f.*, head.*.
inline NamingScheme toy_scheme() {
  return NamingScheme("toy", R"(^layers\.(\d+)\.)",
                      {{ModuleKind::attention, {R"(^layers\.\d+\.attn\.)"}},
                       {ModuleKind::mlp, {R"(^layers\.\d+\.mlp\.)"}},
                       {ModuleKind::norm, {R"(^layers\.\d+\.ln[12]\.)", R"(^ln_f\.)"}},
                       {ModuleKind::embedding, {R"(^(embed|pos_embed)\.)"}},
                       {ModuleKind::head, {R"(^head\.)"}}});
}

inline std::vector<std::string> bundled_scheme_names() { return {"gemma", "llama", "toy"}; }

inline std::optional<NamingScheme> bundled_scheme(std::string_view name) {
  if (name == "llama") return llama_scheme();
  if (name == "gemma") return gemma_scheme();
  if (name == "toy") return toy_scheme();
  return std::nullopt;
}

/// JSON scheme file:
///   {"name": "...", "layer_pattern": "...(\\d+)...",
///    "kinds": {"attention": ["..."], "mlp": ["..."], ...}}
inline NamingScheme scheme_from_json(const nlohmann::json& j, const std::string& source = "<scheme>") {
  try {
    std::vector<NamingScheme::KindRule> rules;
    for (auto& [key, patterns] : j.at("kinds").items()) {
      auto kind = parse_module_kind(key);
      if (!kind) throw SchemeError("unknown module kind '" + key + "'", ErrorContext{source, {}, {}});
      rules.push_back({*kind, patterns.get<std::vector<std::string>>()});
    }
    return NamingScheme(j.value("name", source), j.at("layer_pattern").get<std::string>(), std::move(rules));
  } catch (const nlohmann::json::exception& e) {
    throw SchemeError(std::string("invalid scheme: ") + e.what(), ErrorContext{source, {}, {}});
  }
}

inline nlohmann::json scheme_to_json(const NamingScheme& s) {
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& r : s.rules()) kinds[std::string(to_string(r.kind))] = r.patterns;
  return {{"name", s.name()}, {"layer_pattern", s.layer_pattern()}, {"kinds", kinds}};
}

/// A bundled scheme name or the path of a JSON scheme file.
inline NamingScheme load_scheme(const std::string& name_or_path) {
  if (auto s = bundled_scheme(name_or_path)) return *s;
  std::ifstream in(name_or_path, std::ios::binary);
  if (!in) {
    throw SchemeError("not a bundled scheme (llama, gemma, toy) and not a readable file",
                      ErrorContext{name_or_path, {}, {}});
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemeError(std::string("scheme file is not valid JSON: ") + e.what(), ErrorContext{name_or_path, {}, {}});
  }
  return scheme_from_json(j, name_or_path);
}

}  // namespace cocola
