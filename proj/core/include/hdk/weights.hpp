#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdk/tensor.hpp"

namespace hdk::engine {

enum class Provenance { kSeeded, kFile };

// Named parameter tensors in insertion order.
class WeightStore {
 public:
  void add(const std::string& name, Tensor t);  // duplicate names are an error
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor* find(const std::string& name) const;
  // Throws Error(kMissing) naming the tensor when absent.
  const Tensor& get(const std::string& name) const;
  Tensor& mutable_get(const std::string& name);
  void remove(const std::string& name);

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::int64_t parameter_count() const;

  Provenance provenance = Provenance::kSeeded;
  std::optional<std::uint64_t> seed;
  std::string source;  // file path when loaded

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> index_;
};

// Same names in the same order with bitwise-identical tensors.
bool bitwise_equal(const WeightStore& a, const WeightStore& b);

}  // namespace hdk::engine
