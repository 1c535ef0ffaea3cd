#include "deeplight/optim.hpp"

#include <cmath>

namespace dl {

void Adam::step(NamedTensors& params) {
  for (auto& [name, p] : params) {
    if (!p.has_grad()) throw StateError("adam_step: parameter '" + name + "' has no gradient");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    auto data = p.data();
    auto grad = p.grad();
    auto& m = first_[name];
    auto& v = second_[name];
    if (m.size() != data.size()) {
      m.assign(data.size(), Scalar(0));
      v.assign(data.size(), Scalar(0));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      const double mi = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      const double vi = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      m[i] = static_cast<Scalar>(mi);
      v[i] = static_cast<Scalar>(vi);
      const double update = options_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + options_.eps);
      data[i] = static_cast<Scalar>(data[i] - update);
    }
    p.zero_grad();
  }
}

NamedTensors Adam::state() const {
  NamedTensors out;
  out.emplace_back("adam.step", Tensor::from({1}, {static_cast<Scalar>(step_)}));
  for (const auto& [name, m] : first_) {
    const Shape shape{static_cast<std::int64_t>(m.size())};
    out.emplace_back("adam.m." + name, Tensor::from(shape, m));
    out.emplace_back("adam.v." + name, Tensor::from(shape, second_.at(name)));
  }
  return out;
}

void Adam::load_state(const NamedTensors& records) {
  first_.clear();
  second_.clear();
  step_ = 0;
  for (const auto& [name, t] : records) {
    auto values = std::vector<Scalar>(t.data().begin(), t.data().end());
    if (name == "adam.step") {
      step_ = static_cast<std::int64_t>(t.item());
    } else if (name.rfind("adam.m.", 0) == 0) {
      first_[name.substr(7)] = std::move(values);
    } else if (name.rfind("adam.v.", 0) == 0) {
      second_[name.substr(7)] = std::move(values);
    }
  }
  for (const auto& [name, m] : first_) {
    if (!second_.contains(name) || second_[name].size() != m.size()) {
      throw StateError("optimizer state for '" + name + "' is incomplete");
    }
  }
}

}  // namespace dl
