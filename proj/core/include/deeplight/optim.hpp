#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deeplight/tensor.hpp"

namespace dl {

/// Ordered, named collection of trainable tensors.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// persist across steps.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Applies one update to every parameter and zeroes their gradients.
  // Throws StateError naming the first parameter without a gradient.
  void step(NamedTensors& params);

  std::int64_t steps_taken() const { return step_; }
  const AdamOptions& options() const { return options_; }

  // Moment buffers exposed for checkpointing.
  NamedTensors state() const;
  void load_state(const NamedTensors& records);

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::map<std::string, std::vector<Scalar>> first_;
  std::map<std::string, std::vector<Scalar>> second_;
};

}  // namespace dl
