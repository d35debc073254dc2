#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cocola/error.hpp"

namespace cocola {

/// Two-letter lowercase ASCII language identifier ("en", "fr", ...).
class LanguageCode {
 public:
  constexpr LanguageCode() = default;

  static LanguageCode parse(std::string_view code) {
    if (!valid(code)) {
      throw PreconditionError("invalid language code '" + std::string(code) +
                              "' (expected two lowercase ASCII letters)");
    }
    return LanguageCode(code[0], code[1]);
  }

  static constexpr bool valid(std::string_view code) noexcept {
    return code.size() == 2 && code[0] >= 'a' && code[0] <= 'z' && code[1] >= 'a' && code[1] <= 'z';
  }

  std::string str() const { return std::string(chars_.data(), chars_.size()); }
  std::string_view view() const noexcept { return {chars_.data(), chars_.size()}; }
  bool empty() const noexcept { return chars_[0] == '\0'; }

  friend constexpr auto operator<=>(const LanguageCode&, const LanguageCode&) = default;
  friend constexpr bool operator==(const LanguageCode&, const LanguageCode&) = default;

 private:
  constexpr LanguageCode(char a, char b) : chars_{a, b} {}
  std::array<char, 2> chars_{'\0', '\0'};
};

namespace lang {
inline const LanguageCode en = LanguageCode::parse("en");
inline const LanguageCode fr = LanguageCode::parse("fr");
inline const LanguageCode de = LanguageCode::parse("de");
inline const LanguageCode hi = LanguageCode::parse("hi");
inline const LanguageCode it = LanguageCode::parse("it");
inline const LanguageCode pt = LanguageCode::parse("pt");
inline const LanguageCode es = LanguageCode::parse("es");
}  // namespace lang

/// Display order used by tables and matrices: en, fr, de, hi, it, pt, es.
inline const std::vector<LanguageCode>& default_language_order() {
  static const std::vector<LanguageCode> order{lang::en, lang::fr, lang::de, lang::hi,
                                               lang::it, lang::pt, lang::es};
  return order;
}

/// Sorts codes by the default display order; codes outside it go last, alphabetically.
inline std::vector<LanguageCode> in_display_order(std::vector<LanguageCode> codes) {
  const auto& order = default_language_order();
  auto rank = [&](const LanguageCode& c) {
    auto it = std::find(order.begin(), order.end(), c);
    return static_cast<std::size_t>(it - order.begin());
  };
  std::sort(codes.begin(), codes.end(), [&](const LanguageCode& a, const LanguageCode& b) {
    const auto ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
  return codes;
}

/// Parses a comma separated list such as "en,fr,de".
inline std::vector<LanguageCode> parse_language_list(std::string_view text) {
  std::vector<LanguageCode> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    auto token = text.substr(pos, comma - pos);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) out.push_back(LanguageCode::parse(token));
    pos = comma + 1;
  }
  return out;
}

}  // namespace cocola

template <>
struct std::hash<cocola::LanguageCode> {
  std::size_t operator()(const cocola::LanguageCode& code) const noexcept {
    return std::hash<std::string_view>{}(code.view());
  }
};
