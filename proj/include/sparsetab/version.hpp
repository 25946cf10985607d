#pragma once

namespace sparsetab {

inline constexpr const char* kLibraryVersion = "1.0.0";

}  // namespace sparsetab
