#include "egocast/nn.hpp"

#include <cmath>

namespace egocast {

Tensor xavier_uniform(int fan_in, int fan_out, Shape shape, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), /*requires_grad=*/true);
}

Linear::Linear(int in, int out, Rng& rng)
    : weight(xavier_uniform(in, out, {in, out}, rng)),
      bias(Tensor::zeros({out}, /*requires_grad=*/true)) {}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 1) {
    Tensor row = reshape(x, {1, x.shape()[0]});
    Tensor y = add(matmul(row, weight), bias);
    return reshape(y, {y.shape()[1]});
  }
  return add(matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(int dim)
    : gamma(Tensor::full({dim}, 1.0, /*requires_grad=*/true)),
      beta(Tensor::zeros({dim}, /*requires_grad=*/true)) {}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

EncoderLayer::EncoderLayer(int dim, int n_heads, Rng& rng)
    : norm_attn(dim), norm_ff(dim), ff_in(dim, 4 * dim, rng), ff_out(4 * dim, dim, rng), heads(n_heads) {
  if (n_heads <= 0 || dim % n_heads != 0)
    throw ConfigError("encoder width " + std::to_string(dim) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  attn.wq = xavier_uniform(dim, dim, {dim, dim}, rng);
  attn.bq = Tensor::zeros({dim}, true);
  attn.wk = xavier_uniform(dim, dim, {dim, dim}, rng);
  attn.bk = Tensor::zeros({dim}, true);
  attn.wv = xavier_uniform(dim, dim, {dim, dim}, rng);
  attn.bv = Tensor::zeros({dim}, true);
  attn.wo = xavier_uniform(dim, dim, {dim, dim}, rng);
  attn.bo = Tensor::zeros({dim}, true);
}

Tensor EncoderLayer::forward(const Tensor& x) const {
  Tensor h = add(x, multi_head_self_attention(norm_attn.forward(x), attn, heads));
  return add(h, ff_out.forward(gelu(ff_in.forward(norm_ff.forward(h)))));
}

void EncoderLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  norm_attn.collect(prefix + ".norm_attn", out);
  out.push_back({prefix + ".attn.wq", attn.wq});
  out.push_back({prefix + ".attn.bq", attn.bq});
  out.push_back({prefix + ".attn.wk", attn.wk});
  out.push_back({prefix + ".attn.bk", attn.bk});
  out.push_back({prefix + ".attn.wv", attn.wv});
  out.push_back({prefix + ".attn.bv", attn.bv});
  out.push_back({prefix + ".attn.wo", attn.wo});
  out.push_back({prefix + ".attn.bo", attn.bo});
  norm_ff.collect(prefix + ".norm_ff", out);
  ff_in.collect(prefix + ".ff_in", out);
  ff_out.collect(prefix + ".ff_out", out);
}

TransformerEncoder::TransformerEncoder(int dim, int n_layers, int heads, Rng& rng)
    : final_norm(dim) {
  if (n_layers < 1) throw ConfigError("encoder needs at least one layer");
  layers.reserve(static_cast<std::size_t>(n_layers));
  for (int i = 0; i < n_layers; ++i) layers.emplace_back(dim, heads, rng);
}

Tensor TransformerEncoder::forward(const Tensor& x) const {
  Tensor h = x;
  for (const EncoderLayer& layer : layers) h = layer.forward(h);
  return final_norm.forward(h);
}

void TransformerEncoder::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + ".layer" + std::to_string(i), out);
  final_norm.collect(prefix + ".final_norm", out);
}

Mlp::Mlp(int in, int hidden_dim, int out_dim, Rng& rng)
    : hidden(in, hidden_dim, rng), out(hidden_dim, out_dim, rng) {}

void Mlp::collect(const std::string& prefix, std::vector<NamedParam>& out_params) {
  hidden.collect(prefix + ".hidden", out_params);
  out.collect(prefix + ".out", out_params);
}

}  // namespace egocast
