#pragma once

#include <string>
#include <string_view>

namespace forkpath {

// Hex-encoded SHA-256 of the input bytes. Used for request cache keys and
// store digests, so it must stay stable across releases.
std::string sha256_hex(std::string_view data);

}  // namespace forkpath
