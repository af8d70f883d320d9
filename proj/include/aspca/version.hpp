#pragma once

namespace aspca {

inline constexpr const char* kVersion = "0.1.0";

// Format tag written into saved model files; bump on breaking changes.
inline constexpr const char* kModelFormat = "aspca-model/1";

} // namespace aspca
