#pragma once

#include "cmnt/tensor.hpp"

#include <deque>
#include <map>
#include <string>
#include <vector>

namespace cmnt {

// Named learnable tensors in insertion order. References stay valid as
// parameters are added.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  void zero_grads();
  std::vector<Tensor*> tensors();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Same names, shapes and values (gradients ignored).
  bool operator==(const ParamStore& other) const;

 private:
  std::deque<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cmnt
