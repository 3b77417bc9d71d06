#pragma once

namespace kfarm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kProtocolVersion = 1;

// Full identity string a worker reports in its INFO reply.
inline constexpr const char* kVersionString = "kfarm 0.1.0 protocol 1";

} // namespace kfarm
