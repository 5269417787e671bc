#include "recip/numerics/param_store.hpp"

#include <cmath>

namespace recip {

template <typename T>
BasicTensor<T>& BasicParamStore<T>::add(const std::string& name, BasicTensor<T> value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Entry e{name, std::move(value), {}, {}};
  e.grad = BasicTensor<T>(e.value.shape());
  e.momentum = BasicTensor<T>(e.value.shape());
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

template <typename T>
typename BasicParamStore<T>::Entry& BasicParamStore<T>::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <typename T>
const typename BasicParamStore<T>::Entry& BasicParamStore<T>::entry(
    const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <typename T>
void BasicParamStore<T>::accumulate(const std::string& name, const BasicTensor<T>& g) {
  Entry& e = entry(name);
  require_shape(g, e.value.shape(), ("gradient of " + name).c_str());
  for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
}

template <typename T>
void BasicParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.grad.fill(T{0});
}

template <typename T>
void BasicParamStore<T>::scale_grad(T factor) {
  for (auto& e : entries_) {
    for (auto& g : e.grad.values()) g *= factor;
  }
}

template <typename T>
double BasicParamStore<T>::grad_norm() const {
  double acc = 0.0;
  for (const auto& e : entries_) {
    for (auto g : e.grad.values()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

template <typename T>
std::vector<std::string> BasicParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <typename T>
void sgd_step(BasicParamStore<T>& store, double lr, double momentum) {
  for (const auto& e : store.entries()) {
    for (auto g : e.grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter '" + e.name + "'");
      }
    }
  }
  const T m = static_cast<T>(momentum), step = static_cast<T>(lr);
  for (auto& e : store.entries()) {
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      e.momentum[i] = m * e.momentum[i] + e.grad[i];
      e.value[i] -= step * e.momentum[i];
    }
  }
  store.zero_grad();
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;
template void sgd_step(BasicParamStore<float>&, double, double);
template void sgd_step(BasicParamStore<double>&, double, double);

}  // namespace recip
