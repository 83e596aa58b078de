#pragma once

namespace sve {

inline constexpr const char* kToolName = "svesim";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace sve
