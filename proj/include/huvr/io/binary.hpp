#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

// Little-endian integer and string helpers for the binary file formats.

namespace huvr::io {

void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
/// u32 byte length followed by the bytes.
void write_string(std::ostream& os, const std::string& s);

std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::string read_string(std::istream& is, std::size_t max_len = 1 << 24);

/// Reads exactly `n` bytes and compares them with `magic`; throws FormatError on mismatch.
void expect_magic(std::istream& is, const std::string& magic, const char* what);

/// Writes through `fill` into `path`.tmp, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill);

}  // namespace huvr::io
