#include "kmerspace/autodiff/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kmerspace::ad {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void Checkpoint::put(std::string name, Shape shape, std::vector<float> values) {
  if (numel(shape) != values.size()) throw ShapeError("checkpoint array '" + name + "' shape/value mismatch");
  auto it = std::find_if(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
  if (it != arrays_.end()) {
    it->shape = std::move(shape);
    it->values = std::move(values);
  } else {
    arrays_.push_back({std::move(name), std::move(shape), std::move(values)});
  }
}

const NamedArray* Checkpoint::find(std::string_view name) const {
  auto it = std::find_if(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
  return it == arrays_.end() ? nullptr : &*it;
}

const NamedArray& Checkpoint::get(std::string_view name) const {
  const NamedArray* a = find(name);
  if (!a) throw std::runtime_error("checkpoint has no array named '" + std::string(name) + "'");
  return *a;
}

void Checkpoint::load_into(std::string_view name, const Tensor<float>& t) const {
  const NamedArray& a = get(name);
  if (a.shape != t.shape())
    throw ShapeError("checkpoint array '" + a.name + "' has shape " + shape_str(a.shape) + ", expected " +
                     shape_str(t.shape()));
  std::copy(a.values.begin(), a.values.end(), t.values().begin());
}

Checkpoint Checkpoint::filtered(std::string_view prefix) const {
  Checkpoint out;
  for (const auto& a : arrays_)
    if (a.name.starts_with(prefix)) out.arrays_.push_back(a);
  return out;
}

void Checkpoint::merge(const Checkpoint& other) {
  for (const auto& a : other.arrays_) put(a.name, a.shape, a.values);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.arrays().size()));
  for (const auto& a : ckpt.arrays()) {
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : a.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t count = get_u32(in, "array count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t nlen = get_u32(in, "name length");
    std::string name(nlen, '\0');
    if (!in.read(name.data(), nlen)) throw std::runtime_error("checkpoint truncated in array name");
    const std::uint32_t rank = get_u32(in, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in, "dimension");
    std::vector<float> vals(numel(shape));
    for (float& f : vals) f = std::bit_cast<float>(get_u32(in, "values"));
    ckpt.put(std::move(name), std::move(shape), std::move(vals));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

std::uint64_t fingerprint(const Checkpoint& ckpt) {
  std::ostringstream os;
  write_checkpoint(os, ckpt);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace kmerspace::ad
