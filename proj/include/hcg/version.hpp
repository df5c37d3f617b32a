#pragma once

namespace hcg {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hcg
