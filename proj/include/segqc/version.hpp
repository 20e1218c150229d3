#pragma once

namespace segqc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace segqc
