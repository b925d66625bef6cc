#pragma once

namespace csd {

// Written into every artifact next to the config hash and seed.
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace csd
