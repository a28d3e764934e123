#include "hdk/weights.hpp"

#include <algorithm>

#include "hdk/error.hpp"

namespace hdk::engine {

void WeightStore::add(const std::string& name, Tensor t) {
  if (contains(name)) fail(ErrorKind::kInvalidArgument, "duplicate weight name '" + name + "'");
  order_.push_back(name);
  index_.emplace(name, std::move(t));
}

const Tensor* WeightStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &it->second;
}

const Tensor& WeightStore::get(const std::string& name) const {
  const Tensor* t = find(name);
  if (t == nullptr) fail(ErrorKind::kMissing, "missing weight tensor '" + name + "'");
  return *t;
}

Tensor& WeightStore::mutable_get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::kMissing, "missing weight tensor '" + name + "'");
  return it->second;
}

void WeightStore::remove(const std::string& name) {
  if (index_.erase(name) == 0) fail(ErrorKind::kMissing, "missing weight tensor '" + name + "'");
  order_.erase(std::find(order_.begin(), order_.end(), name));
}

std::int64_t WeightStore::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : index_) n += t.numel();
  return n;
}

bool bitwise_equal(const WeightStore& a, const WeightStore& b) {
  if (a.names() != b.names()) return false;
  for (const auto& name : a.names()) {
    if (!hdk::bitwise_equal(a.get(name), b.get(name))) return false;
  }
  return true;
}

}  // namespace hdk::engine
