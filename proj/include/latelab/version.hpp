#pragma once

namespace latelab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace latelab
