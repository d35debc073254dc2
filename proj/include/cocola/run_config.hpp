#pragma once

// Shared run configuration: an INI file with one section per module. Command
// line flags take precedence over values read here.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cocola/error.hpp"

namespace cocola {

struct RunConfig {
  std::optional<std::string> corpus;
  std::optional<std::string> languages;
  std::optional<bool> strict;
  std::optional<std::string> evaluation_split;
  std::vector<std::string> generations;
  std::optional<std::string> reference;
  std::optional<std::string> membership;
  std::optional<std::string> profiles;
  std::optional<double> langid_threshold;
  std::optional<std::string> scheme;
  std::optional<unsigned> threads;
  std::optional<std::string> output_dir;
};

/// Sections and keys:
///   [corpus]  path, languages, strict, evaluation_split
///   [matcher] generations (comma separated), reference, membership, profiles, langid_threshold
///   [diff]    scheme, threads
///   [output]  dir
/// Relative paths resolve against the config file's directory.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  const std::string source = path.string();
  pt::ptree tree;
  try {
    pt::read_ini(source, tree);
  } catch (const pt::ini_parser_error& e) {
    throw IngestError(e.message(), ErrorContext{source, e.line() ? std::optional<std::size_t>(e.line()) : std::nullopt, {}});
  }
  static const std::map<std::string, std::set<std::string>> known{
      {"corpus", {"path", "languages", "strict", "evaluation_split"}},
      {"matcher", {"generations", "reference", "membership", "profiles", "langid_threshold"}},
      {"diff", {"scheme", "threads"}},
      {"output", {"dir"}}};
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw IngestError("unknown config section [" + section + "]", ErrorContext{source, {}, {}});
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        throw IngestError("unknown key '" + key + "'", ErrorContext{source, {}, section});
      }
    }
  }

  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return (q.is_absolute() || base.empty() ? q : base / q).lexically_normal().string();
  };
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return *v;
  };
  auto typed = [&]<class T>(const char* key) -> std::optional<T> {
    auto child = tree.get_child_optional(pt::ptree::path_type(key, '.'));
    if (!child) return std::nullopt;
    auto v = child->get_value_optional<T>();
    if (!v) throw IngestError("bad value '" + child->data() + "' for " + key, ErrorContext{source, {}, {}});
    return *v;
  };

  RunConfig c;
  if (auto v = get("corpus.path")) c.corpus = resolve(*v);
  c.languages = get("corpus.languages");
  c.strict = typed.template operator()<bool>("corpus.strict");
  c.evaluation_split = get("corpus.evaluation_split");
  if (auto v = get("matcher.generations")) {
    std::istringstream ss(*v);
    for (std::string item; std::getline(ss, item, ',');) {
      const auto a = item.find_first_not_of(" \t");
      if (a == std::string::npos) continue;
      const auto b = item.find_last_not_of(" \t");
      c.generations.push_back(resolve(item.substr(a, b - a + 1)));
    }
  }
  c.reference = get("matcher.reference");
  c.membership = get("matcher.membership");
  if (auto v = get("matcher.profiles")) c.profiles = resolve(*v);
  c.langid_threshold = typed.template operator()<double>("matcher.langid_threshold");
  c.scheme = get("diff.scheme");
  if (c.scheme && c.scheme->find_first_of("/.") != std::string::npos) c.scheme = resolve(*c.scheme);
  c.threads = typed.template operator()<unsigned>("diff.threads");
  if (auto v = get("output.dir")) c.output_dir = resolve(*v);
  return c;
}

}  // namespace cocola
