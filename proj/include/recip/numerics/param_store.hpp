#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "recip/numerics/tensor.hpp"

namespace recip {

/// Named parameters with gradient accumulators and momentum buffers, kept
/// in insertion order so iteration (and serialization) is deterministic.
template <typename T>
class BasicParamStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;
    BasicTensor<T> momentum;
  };

  /// Registers a parameter; grad and momentum start at zero.
  BasicTensor<T>& add(const std::string& name, BasicTensor<T> value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }

  BasicTensor<T>& value(const std::string& name) { return entry(name).value; }
  const BasicTensor<T>& value(const std::string& name) const { return entry(name).value; }
  BasicTensor<T>& grad(const std::string& name) { return entry(name).grad; }
  const BasicTensor<T>& grad(const std::string& name) const { return entry(name).grad; }

  /// Adds `g` into the gradient accumulator of `name`.
  void accumulate(const std::string& name, const BasicTensor<T>& g);

  void zero_grad();
  void scale_grad(T factor);
  double grad_norm() const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

using ParamStore = BasicParamStore<float>;

/// Momentum SGD: v <- m v + g; p <- p - lr v; then gradients are zeroed.
/// Throws NumericError naming the parameter when any gradient is non-finite.
template <typename T>
void sgd_step(BasicParamStore<T>& store, double lr, double momentum);

}  // namespace recip
