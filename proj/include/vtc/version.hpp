#pragma once

namespace vtc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vtc
