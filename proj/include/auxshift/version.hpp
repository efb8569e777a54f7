#pragma once

namespace auxshift {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace auxshift
