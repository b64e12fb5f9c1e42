#pragma once

namespace relight {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportVersion = 1;

}  // namespace relight
