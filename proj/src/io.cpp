#include "ssac/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "ssac/errors.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace fs = std::filesystem;

namespace {

constexpr char kSampleMagic[4] = {'P', 'C', 'B', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace

SampleFormat parse_sample_format(std::string_view name) {
  if (name == "binary") return SampleFormat::Binary;
  if (name == "text") return SampleFormat::Text;
  throw ConfigError("sample_format", "expected binary or text, got '" + std::string(name) + "'");
}

std::string_view sample_extension(SampleFormat format) { return format == SampleFormat::Binary ? ".pcb" : ".xyz"; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw StorageError("read failed: " + path);
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) ensure_directory(target.parent_path().string());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw StorageError("write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw StorageError("cannot move " + tmp + " into place: " + ec.message());
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw StorageError("cannot create directory " + path + ": " + ec.message());
}

void write_sample_binary(const std::string& path, const Points& points) {
  std::string out(kSampleMagic, 4);
  put_u32(out, std::uint32_t(points.size()));
  out.reserve(8 + points.size() * 12);
  for (const auto& p : points)
    for (double v : p) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_file(path, out);
}

void write_sample_text(const std::string& path, const Points& points) {
  std::string out;
  out.reserve(points.size() * 48);
  char line[96];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", double(float(p[0])), double(float(p[1])), double(float(p[2])));
    out += line;
  }
  write_file(path, out);
}

void write_sample(const std::string& path, const Points& points, SampleFormat format) {
  if (format == SampleFormat::Binary) {
    write_sample_binary(path, points);
  } else {
    write_sample_text(path, points);
  }
}

Points read_sample(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kSampleMagic, 4) == 0) {
    if (bytes.size() < 8) throw StorageError(path + ": truncated header");
    const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t count = get_u32(u + 4);
    if (bytes.size() != 8 + count * 12) throw StorageError(path + ": payload size does not match point count");
    Points pts(count);
    for (std::size_t i = 0; i < count; ++i)
      for (int c = 0; c < 3; ++c) pts[i][c] = std::bit_cast<float>(get_u32(u + 8 + (i * 3 + c) * 4));
    return pts;
  }
  Points pts;
  std::istringstream in(bytes);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point p;
    std::string extra;
    if (!(ls >> p[0] >> p[1] >> p[2]) || (ls >> extra)) {
      throw StorageError(path + ":" + std::to_string(number) + ": expected 'x y z'");
    }
    pts.push_back(p);
  }
  if (pts.empty()) throw StorageError(path + ": no points");
  return pts;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw StorageError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

}  // namespace SSAC_ABI
}  // namespace ssac
