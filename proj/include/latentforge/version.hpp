#pragma once

namespace lf {

inline constexpr const char* kToolVersion = "latentforge 0.1.0";

}  // namespace lf
