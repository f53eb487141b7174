#pragma once

#include <string>
#include <vector>

#include "presslm/tensor.hpp"

namespace presslm {

/// Named-tensor container behind the on-disk checkpoint format:
///   "PLMC" | version u32=1 | records
///   record: name_len u32 | name bytes (UTF-8) | rank u32 | dims u32... |
///           values f32 little-endian row-major
/// Insertion order is preserved so saves are byte-deterministic.
class Checkpoint {
 public:
  void put(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace presslm
