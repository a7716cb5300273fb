#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mdet {

// FNV-1a, 64 bit. Used for schema fingerprints, config digests and file
// digests in run manifests. Content identification only, not cryptographic.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset);

// Lower-case 16-char hex rendering of a 64-bit digest.
std::string hex16(std::uint64_t v);

// hex16(fnv1a64(...)) over the raw bytes of a file. Throws on I/O failure.
std::string file_digest(const std::string& path);

}  // namespace mdet
