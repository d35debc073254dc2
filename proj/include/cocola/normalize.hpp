#pragma once

// Unicode text normalization shared by the corpus filter, the answer matcher
// and the language identifier. Backed by ICU.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/uscript.h>

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "cocola/error.hpp"

namespace cocola {

struct NormalizeOptions {
  bool strip_articles = true;
  /// Leading tokens dropped when followed by at least one more token.
  std::vector<std::string> articles{"the", "la", "le", "el", "il", "der", "die", "das"};
};

namespace detail {

inline const icu::Normalizer2& nfkc_casefold() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status) || n == nullptr) {
    throw Error(std::string("ICU NFKC_Casefold unavailable: ") + u_errorName(status));
  }
  return *n;
}

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c) || c == 0x200B; }

inline bool is_boundary_punct(UChar32 c) {
  if (c < 0x80) return std::ispunct(static_cast<int>(c)) != 0;
  return u_ispunct(c) != 0;
}

inline icu::UnicodeString from_utf8(std::string_view text) {
  return icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
}

inline std::string to_utf8(const icu::UnicodeString& text) {
  std::string out;
  text.toUTF8String(out);
  return out;
}

/// Splits on Unicode whitespace and trims boundary punctuation from every token.
inline std::vector<icu::UnicodeString> punct_trimmed_tokens(const icu::UnicodeString& text) {
  std::vector<icu::UnicodeString> tokens;
  icu::UnicodeString current;
  auto flush = [&] {
    int32_t begin = 0;
    int32_t end = current.length();
    while (begin < end) {
      UChar32 c = current.char32At(begin);
      if (!is_boundary_punct(c)) break;
      begin = current.moveIndex32(begin, 1);
    }
    while (end > begin) {
      int32_t prev = current.moveIndex32(end, -1);
      if (!is_boundary_punct(current.char32At(prev))) break;
      end = prev;
    }
    if (end > begin) tokens.emplace_back(current, begin, end - begin);
    current.remove();
  };
  for (int32_t i = 0; i < text.length();) {
    UChar32 c = text.char32At(i);
    if (is_space(c)) {
      flush();
    } else {
      current.append(c);
    }
    i = text.moveIndex32(i, 1);
  }
  flush();
  return tokens;
}

}  // namespace detail

/// NFKC + case folding, whitespace collapse, boundary punctuation removal and
/// optional leading-article removal. Idempotent.
inline std::string normalize(std::string_view text, const NormalizeOptions& options = {}) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString folded = detail::nfkc_casefold().normalize(detail::from_utf8(text), status);
  if (U_FAILURE(status)) throw Error(std::string("normalization failed: ") + u_errorName(status));

  auto tokens = detail::punct_trimmed_tokens(folded);
  std::size_t first = 0;
  if (options.strip_articles) {
    auto is_article = [&](const icu::UnicodeString& token) {
      const std::string utf8 = detail::to_utf8(token);
      for (const auto& a : options.articles) {
        if (utf8 == a) return true;
      }
      return false;
    };
    while (tokens.size() - first > 1 && is_article(tokens[first])) ++first;
  }

  icu::UnicodeString joined;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    if (i > first) joined.append(static_cast<UChar>(u' '));
    joined.append(tokens[i]);
  }
  // Punctuation removal can leave a sequence that composes differently.
  icu::UnicodeString renormalized = detail::nfkc_casefold().normalize(joined, status);
  if (U_FAILURE(status)) throw Error(std::string("normalization failed: ") + u_errorName(status));
  return detail::to_utf8(renormalized);
}

/// Character counts per script over alphabetic code points.
struct ScriptProfile {
  std::size_t letters = 0;
  std::size_t devanagari = 0;
  std::size_t latin = 0;

  double devanagari_share() const { return letters ? static_cast<double>(devanagari) / letters : 0.0; }
  double latin_share() const { return letters ? static_cast<double>(latin) / letters : 0.0; }
};

inline ScriptProfile script_profile(std::string_view text) {
  ScriptProfile p;
  const icu::UnicodeString u = detail::from_utf8(text);
  for (int32_t i = 0; i < u.length(); i = u.moveIndex32(i, 1)) {
    const UChar32 c = u.char32At(i);
    if (!u_hasBinaryProperty(c, UCHAR_ALPHABETIC)) continue;
    ++p.letters;
    UErrorCode status = U_ZERO_ERROR;
    const UScriptCode script = uscript_getScript(c, &status);
    if (U_FAILURE(status)) continue;
    if (script == USCRIPT_DEVANAGARI) ++p.devanagari;
    if (script == USCRIPT_LATIN) ++p.latin;
  }
  return p;
}

/// Number of Unicode code points in a UTF-8 string.
inline std::size_t code_point_count(std::string_view text) {
  const icu::UnicodeString u = detail::from_utf8(text);
  return static_cast<std::size_t>(u.countChar32());
}

/// Splits a UTF-8 string into UTF-8 encoded code points.
inline std::vector<std::string> code_points(std::string_view text) {
  std::vector<std::string> out;
  const icu::UnicodeString u = detail::from_utf8(text);
  for (int32_t i = 0; i < u.length(); i = u.moveIndex32(i, 1)) {
    icu::UnicodeString one(u.char32At(i));
    out.push_back(detail::to_utf8(one));
  }
  return out;
}

}  // namespace cocola
