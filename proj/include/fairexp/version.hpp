#pragma once

namespace fairexp {

inline constexpr const char* version = "0.1.0";

}  // namespace fairexp
