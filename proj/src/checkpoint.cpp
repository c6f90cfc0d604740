#include "ssac/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ssac/errors.hpp"
#include "ssac/io.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

constexpr std::size_t kMaxHeaderBytes = std::size_t(1) << 24;

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('x', start), text.size());
    const long long v = parse_integer("tensor", text.substr(start, end - start));
    if (v < 1) throw StorageError("checkpoint: non-positive tensor extent");
    s.push_back(std::size_t(v));
    start = end + 1;
  }
  return s;
}

void append_le32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(char((bits >> (8 * i)) & 0xFFu));
}

float read_le32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<NamedTensor> model_tensors(const Model& model) {
  std::vector<NamedTensor> out = model.encoder.tensors();
  if (model.head == HeadKind::Subspace) {
    for (const auto& s : model.subspaces.subspaces) {
      const auto prefix = "subspace." + std::to_string(s.class_id) + ".";
      if (s.basis.defined()) out.push_back({prefix + "W", s.basis});
      out.push_back({prefix + "b", s.bias});
    }
  } else {
    out.push_back({"head.W", model.linear_w});
    out.push_back({"head.b", model.linear_b});
  }
  return out;
}

std::string checkpoint_bytes(const TrainedModel& tm) {
  std::ostringstream h;
  for (const auto& [k, v] : tm.config.entries()) h << "config." << k << " = " << v << "\n";
  h << "classes = " << tm.model.classes() << "\n";
  h << "epoch = " << tm.epoch << "\n";
  h << "val.acc = " << format_real(tm.validation.acc) << "\n";
  h << "val.ba = " << format_real(tm.validation.ba) << "\n";
  h << "val.f1 = " << format_real(tm.validation.f1) << "\n";
  std::string payload;
  for (const auto& [name, t] : model_tensors(tm.model)) {
    h << "tensor = " << name << " " << shape_text(t.shape()) << " " << payload.size() << "\n";
    for (Real v : t.data()) append_le32(payload, static_cast<float>(v));
  }
  h << "payload_bytes = " << payload.size() << "\n";
  const std::string header = h.str();
  std::string out = kCheckpointMagic;
  out += "header_bytes " + std::to_string(header.size()) + "\n";
  out += header;
  out += payload;
  return out;
}

TrainedModel parse_checkpoint(const std::string& bytes) {
  const std::string magic = kCheckpointMagic;
  if (bytes.compare(0, magic.size(), magic) != 0) throw StorageError("checkpoint: bad magic");
  std::size_t pos = magic.size();
  const std::size_t eol = bytes.find('\n', pos);
  const std::string tag = "header_bytes ";
  if (eol == std::string::npos || bytes.compare(pos, tag.size(), tag) != 0) {
    throw StorageError("checkpoint: missing header length");
  }
  const long long hlen = parse_integer("header_bytes", bytes.substr(pos + tag.size(), eol - pos - tag.size()));
  if (hlen < 0 || std::size_t(hlen) > kMaxHeaderBytes || std::size_t(hlen) > bytes.size() - eol - 1) {
    throw StorageError("checkpoint: header length out of range");
  }
  const std::string header = bytes.substr(eol + 1, std::size_t(hlen));
  const std::size_t payload_start = eol + 1 + std::size_t(hlen);
  const std::size_t payload_size = bytes.size() - payload_start;

  TrainConfig cfg;
  auto binder = cfg.binder();
  TrainedModel tm;
  std::size_t classes = 0;
  long long declared_payload = -1;
  struct Entry {
    Shape shape;
    std::size_t offset;
  };
  std::map<std::string, Entry> directory;
  for (const auto& e : parse_key_values(header)) {
    if (e.key.rfind("config.", 0) == 0) {
      binder.apply(KeyValueEntry{e.key.substr(7), e.value, e.line});
    } else if (e.key == "classes") {
      classes = std::size_t(parse_integer(e.key, e.value));
    } else if (e.key == "epoch") {
      tm.epoch = std::size_t(parse_integer(e.key, e.value));
    } else if (e.key == "val.acc") {
      tm.validation.acc = parse_double(e.key, e.value);
    } else if (e.key == "val.ba") {
      tm.validation.ba = parse_double(e.key, e.value);
    } else if (e.key == "val.f1") {
      tm.validation.f1 = parse_double(e.key, e.value);
    } else if (e.key == "payload_bytes") {
      declared_payload = parse_integer(e.key, e.value);
    } else if (e.key == "tensor") {
      std::istringstream in(e.value);
      std::string name, shape;
      long long offset = -1;
      if (!(in >> name >> shape >> offset) || offset < 0) throw StorageError("checkpoint: bad tensor line " + std::to_string(e.line));
      directory[name] = Entry{parse_shape(shape), std::size_t(offset)};
    } else {
      throw StorageError("checkpoint: unknown header key '" + e.key + "'");
    }
  }
  if (declared_payload < 0 || std::size_t(declared_payload) != payload_size) {
    throw StorageError("checkpoint: payload length " + std::to_string(payload_size) + " does not match the header");
  }
  cfg.validate();
  tm.config = cfg;
  tm.model = model_init(cfg, classes);
  tm.model.encoder.mode = Mode::Eval;

  const auto tensors = model_tensors(tm.model);
  if (tensors.size() != directory.size()) throw StorageError("checkpoint: tensor directory does not match the config");
  std::size_t expected_offset = 0;
  for (const auto& [name, t] : tensors) {
    auto it = directory.find(name);
    if (it == directory.end()) throw StorageError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape != t.shape()) {
      throw StorageError("checkpoint: tensor '" + name + "' has shape " + shape_text(it->second.shape) + ", expected " +
                         shape_text(t.shape()));
    }
    if (it->second.offset != expected_offset) throw StorageError("checkpoint: tensor '" + name + "' out of order");
    const std::size_t n = t.numel();
    if (expected_offset + 4 * n > payload_size) throw StorageError("checkpoint: payload truncated");
    Tensor dst = t;
    auto data = dst.mutable_data();
    const char* src = bytes.data() + payload_start + expected_offset;
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<Real>(read_le32(src + 4 * i));
    expected_offset += 4 * n;
  }
  if (expected_offset != payload_size) throw StorageError("checkpoint: trailing payload bytes");
  return tm;
}

void save_checkpoint(const std::string& path, const TrainedModel& model) { write_file(path, checkpoint_bytes(model)); }

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("checkpoint: cannot open " + path);
  const std::string magic = kCheckpointMagic;
  std::string head(magic.size(), '\0');
  in.read(head.data(), std::streamsize(head.size()));
  if (in.gcount() != std::streamsize(head.size()) || head != magic) {
    throw StorageError("checkpoint: " + path + " does not start with the SSAC1 magic");
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  return parse_checkpoint(head + rest.str());
}

}  // namespace SSAC_ABI
}  // namespace ssac
