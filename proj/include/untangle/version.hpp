#pragma once

namespace untangle {

inline constexpr const char* kVersion = "untangle-0.1.0";

}  // namespace untangle
