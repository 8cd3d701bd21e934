#pragma once

namespace mimoseg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mimoseg
