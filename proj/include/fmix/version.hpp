#pragma once

namespace fmix {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fmix
