#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kmerspace/autodiff/tensor.hpp"

namespace kmerspace::ad {

inline constexpr char kCheckpointMagic[4] = {'K', 'M', 'S', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

/// Ordered collection of named float arrays.
///
/// Binary layout, all integers little-endian uint32:
///   "KMSP" | version | array count | per array: name length, name bytes, rank,
///   rank dims, then prod(dims) little-endian IEEE-754 float32 values.
class Checkpoint {
 public:
  void put(std::string name, Shape shape, std::vector<float> values);
  void put(std::string name, const Tensor<float>& t) { put(std::move(name), t.shape(), {t.values().begin(), t.values().end()}); }

  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const NamedArray* find(std::string_view name) const;
  const NamedArray& get(std::string_view name) const;

  /// Copies the named array into `t`, which must already have the stored shape.
  void load_into(std::string_view name, const Tensor<float>& t) const;

  const std::vector<NamedArray>& arrays() const { return arrays_; }

  /// Copy holding only the arrays whose names start with `prefix`.
  Checkpoint filtered(std::string_view prefix) const;
  void merge(const Checkpoint& other);

  bool operator==(const Checkpoint&) const = default;

 private:
  std::vector<NamedArray> arrays_;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a over the serialized bytes.
std::uint64_t fingerprint(const Checkpoint& ckpt);

}  // namespace kmerspace::ad
