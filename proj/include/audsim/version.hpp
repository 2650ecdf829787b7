#pragma once

#include <string_view>

namespace audsim {

inline constexpr std::string_view kToolName = "audsim";
inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace audsim
