#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace cantm::core {

// Named model parameters plus the set of names the optimizer may update.
// Everything not in `trainable` is frozen: it enters the tape as a constant
// and stays bit-identical for the lifetime of a run.
struct ParamStore {
  std::map<std::string, Tensor> tensors;
  std::set<std::string> trainable;

  bool is_trainable(const std::string& name) const {
    return trainable.count(name) > 0;
  }

  const Tensor& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("missing parameter '" + name + "'");
    return it->second;
  }

  Tensor& get_mut(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("missing parameter '" + name + "'");
    return it->second;
  }

  long long scalar_count() const {
    long long n = 0;
    for (const auto& [k, t] : tensors) n += t.size();
    return n;
  }

  long long trainable_scalar_count() const {
    long long n = 0;
    for (const auto& k : trainable) n += get(k).size();
    return n;
  }
};

}  // namespace cantm::core
