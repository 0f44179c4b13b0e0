#include "sdcn/params.hpp"

#include <stdexcept>

namespace sdcn {

Param& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) {
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  }
  Param p;
  p.grad = Tensor(init.shape(), 0.0);
  p.velocity = Tensor(init.shape(), 0.0);
  p.value = std::move(init);
  order_.push_back(name);
  return params_.emplace(name, std::move(p)).first->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("ParamStore: no parameter named " + name);
  }
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("ParamStore: no parameter named " + name);
  }
  return it->second;
}

Var ParamStore::bind(const std::string& name, bool trainable) {
  Param& p = at(name);
  ++accesses_[name];
  return Var::parameter(p.value, trainable ? &p.grad : nullptr);
}

Var ParamStore::bind_const(const std::string& name) const {
  const Param& p = at(name);
  ++accesses_[name];
  return Var::constant(p.value);
}

std::size_t ParamStore::access_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, count] : accesses_) {
    if (name.compare(0, prefix.size(), prefix) == 0) n += count;
  }
  return n;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& [name, p] : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.order_ != b.order_) return false;
  for (const auto& name : a.order_) {
    const Param& pa = a.params_.at(name);
    const Param& pb = b.params_.at(name);
    if (!(pa.value == pb.value) || !(pa.velocity == pb.velocity)) return false;
  }
  return true;
}

namespace {

void update(Param& p, const SgdOptions& options) {
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i] + options.weight_decay * p.value[i];
    p.velocity[i] = options.momentum * p.velocity[i] + g;
    p.value[i] -= options.learning_rate * p.velocity[i];
  }
  p.grad.fill(0.0);
}

}  // namespace

void sgd_step(ParamStore& store, const SgdOptions& options) {
  for (const auto& name : store.names()) update(store.at(name), options);
}

void sgd_step(ParamStore& store, const SgdOptions& options,
              std::span<const std::string> prefixes) {
  for (const auto& name : store.names()) {
    for (const auto& prefix : prefixes) {
      if (name.compare(0, prefix.size(), prefix) == 0) {
        update(store.at(name), options);
        break;
      }
    }
  }
}

}  // namespace sdcn
