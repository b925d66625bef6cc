#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/numerics/tensor.hpp"

// Versioned binary container shared by classifier and detector files:
//   magic (8 bytes) | u32 version | u64 descriptor length | descriptor JSON |
//   f32 blocks in descriptor order | u64 FNV-1a of every preceding byte.
// Integers and floats are little-endian. The descriptor carries a "blocks"
// array with the shape of every parameter block.
namespace csd::io {

struct Container {
    nlohmann::json descriptor;
    std::vector<num::Tensor> blocks;
};

void write_container(std::ostream& out, const std::string& magic, std::uint32_t version, const Container& c);
// Errors: SchemaError (wrong magic or malformed descriptor), VersionMismatchError,
// TruncatedFileError, ChecksumError.
Container read_container(std::istream& in, const std::string& magic, std::uint32_t version);

void save_container(const std::filesystem::path& path, const std::string& magic, std::uint32_t version,
                    const Container& c);
Container load_container(const std::filesystem::path& path, const std::string& magic, std::uint32_t version);

}  // namespace csd::io
