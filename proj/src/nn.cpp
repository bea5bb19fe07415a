#include "glomseg/nn.hpp"

#include <cmath>

namespace glomseg::nn {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

std::vector<std::pair<std::string, Var>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  collect_parameters("", out);
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Module::named_buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_buffers("", out);
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : named_parameters()) n += static_cast<std::int64_t>(p.value().numel());
  return n;
}

void Module::set_training(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->set_training(on);
}

Var Module::register_parameter(std::string name, Tensor init) {
  Var p(std::move(init), true);
  params_.emplace_back(std::move(name), p);
  return p;
}

void Module::register_buffer(std::string name, Tensor* buffer) {
  buffers_.emplace_back(std::move(name), buffer);
}

void Module::collect_parameters(const std::string& prefix,
                                std::vector<std::pair<std::string, Var>>& out) const {
  for (const auto& [name, p] : params_) out.emplace_back(prefix + name, p);
  for (const auto& [name, child] : children_) child->collect_parameters(prefix + name + ".", out);
}

void Module::collect_buffers(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& [name, b] : buffers_) out.emplace_back(prefix + name, b);
  for (auto& [name, child] : children_) child->collect_buffers(prefix + name + ".", out);
}

Linear::Linear(std::int64_t in, std::int64_t out, Rng& rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = register_parameter("weight", uniform_tensor({out, in}, bound, rng));
  if (bias) bias_ = register_parameter("bias", uniform_tensor({out}, bound, rng));
}

Conv2d::Conv2d(std::int64_t in, std::int64_t out, Options opt, Rng& rng) : opt_(opt) {
  const std::int64_t fan_in = (in / opt.groups) * opt.kernel * opt.kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight_ = register_parameter("weight",
                               uniform_tensor({out, in / opt.groups, opt.kernel, opt.kernel}, bound, rng));
  if (opt.bias) bias_ = register_parameter("bias", uniform_tensor({out}, bound, rng));
}

Var Conv2d::forward(const Var& x) const {
  return ops::conv2d(x, weight_, bias_, opt_.stride, opt_.padding, opt_.groups);
}

LayerNorm::LayerNorm(std::int64_t dim, double eps) : eps_(eps) {
  gamma_ = register_parameter("weight", Tensor({dim}, 1.0));
  beta_ = register_parameter("bias", Tensor({dim}, 0.0));
}

BatchNorm2d::BatchNorm2d(std::int64_t channels, double eps, double momentum)
    : eps_(eps), momentum_(momentum), running_mean_({channels}, 0.0), running_var_({channels}, 1.0) {
  gamma_ = register_parameter("weight", Tensor({channels}, 1.0));
  beta_ = register_parameter("bias", Tensor({channels}, 0.0));
  register_buffer("running_mean", &running_mean_);
  register_buffer("running_var", &running_var_);
}

Var BatchNorm2d::forward(const Var& x) {
  ops::BatchNormState st{&running_mean_, &running_var_, momentum_, eps_};
  return ops::batch_norm2d(x, gamma_, beta_, st, training());
}

}  // namespace glomseg::nn
