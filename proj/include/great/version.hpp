#pragma once

namespace great {

inline constexpr const char* kFrameworkVersion = "0.3.0";

}  // namespace great
