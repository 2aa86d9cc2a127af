#pragma once

#include <string>
#include <vector>

#include "egocast/rng.hpp"
#include "egocast/tensor.hpp"

namespace egocast {

// A learnable tensor with a stable name, used for optimization and
// checkpointing. The Tensor handle shares storage with the owning layer.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Glorot/Xavier uniform initialization.
Tensor xavier_uniform(int fan_in, int fan_out, Shape shape, Rng& rng);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng);

  // Accepts [k x in] or a bare [in] vector.
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

// Pre-norm residual block: x + attn(norm(x)), then x + ff(norm(x)).
// Feed-forward expands to 4x width with GELU.
struct EncoderLayer {
  LayerNorm norm_attn, norm_ff;
  AttentionParams attn;
  Linear ff_in, ff_out;
  int heads = 1;

  EncoderLayer() = default;
  EncoderLayer(int dim, int heads, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

struct TransformerEncoder {
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  TransformerEncoder() = default;
  TransformerEncoder(int dim, int n_layers, int heads, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

// Two-layer perceptron with GELU after the hidden layer.
struct Mlp {
  Linear hidden, out;

  Mlp() = default;
  Mlp(int in, int hidden_dim, int out_dim, Rng& rng);

  Tensor forward(const Tensor& x) const { return out.forward(gelu(hidden.forward(x))); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

}  // namespace egocast
