#ifndef BUSRL_MLP_HPP_
#define BUSRL_MLP_HPP_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "busrl/rng.hpp"

namespace busrl {

enum class Activation { kTanh, kRelu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

// Fully connected network, hidden layers use `activation`, output is linear.
// All weights live in one flat vector: for each layer the row-major
// (out x in) weight block followed by the bias block.
struct MlpParams {
  std::vector<int> sizes;  // input, hidden..., output
  Activation activation = Activation::kTanh;
  std::vector<double> data;

  static MlpParams create(std::vector<int> sizes, Activation activation);
  // Glorot-uniform init; the last layer is scaled by
  // `output_gain` so fresh policies start near uniform.
  static MlpParams random(std::vector<int> sizes, Activation activation, Rng& rng,
                          double output_gain = 1.0);

  std::size_t num_layers() const { return sizes.size() - 1; }
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }

  MlpParams zeros_like() const;
  bool all_finite() const;
  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

std::size_t param_count(const std::vector<int>& sizes);

// Per-layer outputs from a forward pass, needed for backprop. Entry 0 is the
// input; the last entry is the linear output.
struct MlpCache {
  std::vector<std::vector<double>> layers;
};

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input,
                                MlpCache* cache = nullptr);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
// Returns d(loss)/d(input).
std::vector<double> mlp_backward(const MlpParams& params, const MlpCache& cache,
                                 std::span<const double> grad_output, MlpParams& grad);

// Versioned text checkpoint. Floats are written as hex literals so a
// round trip is exact.
void write_checkpoint(std::ostream& out, const std::vector<std::pair<std::string, const MlpParams*>>& nets);
std::vector<std::pair<std::string, MlpParams>> read_checkpoint(std::istream& in);

// Adam on a flat parameter vector.
struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t num_params, AdamConfig config);

  void step(std::span<double> params, std::span<const double> grad);
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

// Scales `grad` in place so its L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

}  // namespace busrl

#endif  // BUSRL_MLP_HPP_
