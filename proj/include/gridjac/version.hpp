#pragma once

namespace gridjac {
inline constexpr const char* kVersion = "0.1.0";
}
