#include "cmnt/params.hpp"

#include "cmnt/error.hpp"

namespace cmnt {

Tensor& ParamStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(tensor)});
  return entries_.back().tensor;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<Tensor*> ParamStore::tensors() {
  std::vector<Tensor*> out;
  out.reserve(entries_.size());
  for (auto& e : entries_) out.push_back(&e.tensor);
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!(entries_[i].tensor == other.entries_[i].tensor)) return false;
  }
  return true;
}

}  // namespace cmnt
