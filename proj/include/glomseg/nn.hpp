#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "glomseg/autograd.hpp"
#include "glomseg/ops.hpp"
#include "glomseg/random.hpp"

namespace glomseg::nn {

/// Parameter/buffer registry with hierarchical dotted names, in the spirit of
/// torch::nn::Module. Modules are held by shared_ptr and never copied.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;
  std::vector<std::pair<std::string, Tensor*>> named_buffers();
  std::int64_t parameter_count() const;

  void set_training(bool on);
  bool training() const { return training_; }

 protected:
  Var register_parameter(std::string name, Tensor init);
  void register_buffer(std::string name, Tensor* buffer);
  template <typename M>
  std::shared_ptr<M> register_module(std::string name, std::shared_ptr<M> module) {
    children_.emplace_back(std::move(name), module);
    return module;
  }

 private:
  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, Var>>& out) const;
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor*>>& out);

  bool training_ = true;
  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, std::shared_ptr<Module>>> children_;
};

/// Weight and bias drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
class Linear : public Module {
 public:
  Linear(std::int64_t in, std::int64_t out, Rng& rng, bool bias = true);
  Var forward(const Var& x) const { return ops::linear(x, weight_, bias_); }

 private:
  Var weight_, bias_;
};

class Conv2d : public Module {
 public:
  struct Options {
    std::int64_t kernel = 3;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t groups = 1;
    bool bias = true;
  };
  Conv2d(std::int64_t in, std::int64_t out, Options opt, Rng& rng);
  Var forward(const Var& x) const;

 private:
  Options opt_;
  Var weight_, bias_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::int64_t dim, double eps = 1e-5);
  Var forward(const Var& x) const { return ops::layer_norm(x, gamma_, beta_, eps_); }

 private:
  double eps_;
  Var gamma_, beta_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(std::int64_t channels, double eps = 1e-5, double momentum = 0.1);
  Var forward(const Var& x);

 private:
  double eps_, momentum_;
  Var gamma_, beta_;
  Tensor running_mean_, running_var_;
};

}  // namespace glomseg::nn
