#pragma once

#include <cstdint>
#include <vector>

#include "multirc/tensor.hpp"

namespace multirc {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  /// Applies one update from the gradients currently stored on the parameters.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  std::uint64_t step_ = 0;
};

}  // namespace multirc
