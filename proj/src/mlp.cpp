#include "busrl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "busrl/errors.hpp"

namespace busrl {

namespace {

constexpr const char* kCheckpointMagic = "busrl-checkpoint";
constexpr int kCheckpointVersion = 1;

double activate(Activation act, double x) {
  return act == Activation::kTanh ? std::tanh(x) : std::max(0.0, x);
}

// Derivative expressed through the activation output y.
double activate_grad(Activation act, double y) {
  return act == Activation::kTanh ? 1.0 - y * y : (y > 0.0 ? 1.0 : 0.0);
}

}  // namespace

std::string to_string(Activation act) { return act == Activation::kTanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t param_count(const std::vector<int>& sizes) {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    total += static_cast<std::size_t>(sizes[l + 1]) * static_cast<std::size_t>(sizes[l] + 1);
  return total;
}

MlpParams MlpParams::create(std::vector<int> sizes, Activation activation) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw ConfigError("MLP layer sizes must be positive");
  MlpParams p;
  p.data.assign(param_count(sizes), 0.0);
  p.sizes = std::move(sizes);
  p.activation = activation;
  return p;
}

MlpParams MlpParams::random(std::vector<int> sizes, Activation activation, Rng& rng,
                            double output_gain) {
  MlpParams p = create(std::move(sizes), activation);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const int fan_in = p.sizes[l];
    const int fan_out = p.sizes[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    if (l + 1 == p.num_layers()) bound *= output_gain;
    const std::size_t w = p.weight_offset(l);
    for (std::size_t k = 0; k < static_cast<std::size_t>(fan_in * fan_out); ++k)
      p.data[w + k] = rng.uniform(-bound, bound);
  }
  return p;
}

std::size_t MlpParams::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l)
    off += static_cast<std::size_t>(sizes[l + 1]) * static_cast<std::size_t>(sizes[l] + 1);
  return off;
}

std::size_t MlpParams::bias_offset(std::size_t layer) const {
  return weight_offset(layer) +
         static_cast<std::size_t>(sizes[layer + 1]) * static_cast<std::size_t>(sizes[layer]);
}

MlpParams MlpParams::zeros_like() const {
  MlpParams g = *this;
  std::fill(g.data.begin(), g.data.end(), 0.0);
  return g;
}

bool MlpParams::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input,
                                MlpCache* cache) {
  if (static_cast<int>(input.size()) != params.input_size())
    throw ContractError("MLP input has " + std::to_string(input.size()) + " entries, expected " +
                        std::to_string(params.input_size()));
  std::vector<double> x(input.begin(), input.end());
  if (cache) {
    cache->layers.clear();
    cache->layers.push_back(x);
  }
  const std::size_t layers = params.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(params.sizes[l]);
    const auto out = static_cast<std::size_t>(params.sizes[l + 1]);
    const double* w = params.data.data() + params.weight_offset(l);
    const double* b = params.data.data() + params.bias_offset(l);
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = l + 1 < layers ? activate(params.activation, acc) : acc;
    }
    x = std::move(y);
    if (cache) cache->layers.push_back(x);
  }
  return x;
}

std::vector<double> mlp_backward(const MlpParams& params, const MlpCache& cache,
                                 std::span<const double> grad_output, MlpParams& grad) {
  const std::size_t layers = params.num_layers();
  std::vector<double> delta(grad_output.begin(), grad_output.end());
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<std::size_t>(params.sizes[l]);
    const auto out = static_cast<std::size_t>(params.sizes[l + 1]);
    if (l + 1 < layers) {
      const auto& y = cache.layers[l + 1];
      for (std::size_t o = 0; o < out; ++o) delta[o] *= activate_grad(params.activation, y[o]);
    }
    const auto& x = cache.layers[l];
    const double* w = params.data.data() + params.weight_offset(l);
    double* gw = grad.data.data() + params.weight_offset(l);
    double* gb = grad.data.data() + params.bias_offset(l);
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* grow = gw + o * in;
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        grow[i] += d * x[i];
        prev[i] += d * row[i];
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

void write_checkpoint(std::ostream& out,
                      const std::vector<std::pair<std::string, const MlpParams*>>& nets) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "networks " << nets.size() << '\n';
  char buf[64];
  for (const auto& [name, p] : nets) {
    out << "network " << name << ' ' << to_string(p->activation) << ' ' << p->sizes.size();
    for (int s : p->sizes) out << ' ' << s;
    out << '\n' << "params " << p->data.size() << '\n';
    for (std::size_t k = 0; k < p->data.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%a", p->data[k]);
      out << buf << ((k + 1) % 8 == 0 || k + 1 == p->data.size() ? '\n' : ' ');
    }
  }
}

std::vector<std::pair<std::string, MlpParams>> read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic)
    throw ConfigError("not a busrl checkpoint");
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "networks") throw ConfigError("checkpoint: missing network count");
  std::vector<std::pair<std::string, MlpParams>> nets;
  for (std::size_t k = 0; k < count; ++k) {
    std::string name, act;
    std::size_t layers = 0;
    if (!(in >> word >> name >> act >> layers) || word != "network")
      throw ConfigError("checkpoint: bad network header");
    std::vector<int> sizes(layers);
    for (int& s : sizes)
      if (!(in >> s)) throw ConfigError("checkpoint: bad layer sizes");
    MlpParams p = MlpParams::create(sizes, activation_from_string(act));
    std::size_t n = 0;
    if (!(in >> word >> n) || word != "params" || n != p.data.size())
      throw ConfigError("checkpoint: parameter count mismatch for " + name);
    for (double& x : p.data) {
      std::string tok;
      if (!(in >> tok)) throw ConfigError("checkpoint: truncated parameters for " + name);
      x = std::strtod(tok.c_str(), nullptr);
    }
    nets.emplace_back(name, std::move(p));
  }
  return nets;
}

Adam::Adam(std::size_t num_params, AdamConfig config)
    : config_(config), m_(num_params, 0.0), v_(num_params, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ContractError("Adam: parameter / gradient size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grad[k];
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
    const double mhat = m_[k] / c1;
    const double vhat = v_[k] / c2;
    params[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    for (double& g : grad) g *= scale;
  }
  return norm;
}

}  // namespace busrl
