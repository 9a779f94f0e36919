#pragma once

namespace wavecast {

inline constexpr const char* kVersion = "0.1.0";

} // namespace wavecast
