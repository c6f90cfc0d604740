#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ssac/datagen.hpp"

namespace ssac {
inline namespace SSAC_ABI {

enum class SampleFormat { Binary, Text };

SampleFormat parse_sample_format(std::string_view name);
std::string_view sample_extension(SampleFormat format);

/// Binary: "PCB1", uint32 point count, then x y z per point, all
/// little-endian float32.
void write_sample_binary(const std::string& path, const Points& points);
/// Text: one "x y z" line per point, 9 significant digits (exact for float32).
void write_sample_text(const std::string& path, const Points& points);
void write_sample(const std::string& path, const Points& points, SampleFormat format);
/// Either format; the binary magic decides.
Points read_sample(const std::string& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

std::string read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, std::string_view bytes);
void ensure_directory(const std::string& path);

}  // namespace SSAC_ABI
}  // namespace ssac
