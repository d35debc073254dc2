#pragma once

namespace cocola {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cocola
