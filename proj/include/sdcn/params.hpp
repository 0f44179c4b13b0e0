#ifndef SDCN_PARAMS_HPP_
#define SDCN_PARAMS_HPP_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdcn/autograd.hpp"
#include "sdcn/tensor.hpp"

namespace sdcn {

struct Param {
  Tensor value;
  Tensor grad;
  Tensor velocity;
};

// Named parameter tensors in insertion order. bind() is the only way the
// networks read parameters, so access_count() observes every use.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  bool empty() const { return order_.empty(); }

  // Trainable binds route gradients into Param::grad; frozen binds are
  // constants.
  Var bind(const std::string& name, bool trainable);
  Var bind_const(const std::string& name) const;

  // Binds of parameters whose name starts with prefix.
  std::size_t access_count(const std::string& prefix = "") const;
  void reset_access_count() { accesses_.clear(); }
  std::size_t parameter_count() const;
  bool all_finite() const;
  void zero_grad();

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Param> params_;
  std::vector<std::string> order_;
  mutable std::map<std::string, std::size_t> accesses_;
};

struct SgdOptions {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v.
// Gradients are cleared afterwards.
void sgd_step(ParamStore& store, const SgdOptions& options);
// Same, restricted to parameters whose names start with one of the prefixes;
// the others keep their values, velocities and gradients.
void sgd_step(ParamStore& store, const SgdOptions& options,
              std::span<const std::string> prefixes);

}  // namespace sdcn

#endif  // SDCN_PARAMS_HPP_
