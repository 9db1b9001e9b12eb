#pragma once

// Point Transformer: GLU point embedding (absolute + kNN-relative branches),
// an iterative transformer block applied M times with one shared weight set,
// hard-routed grouping with a routing loss, softmax-weighted aggregation of all
// per-pass group vectors, and an MLP classification head. Everything is built
// from pt::ops; there are no convolutions.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pt/pointcloud.hpp"
#include "pt/tensor.hpp"

namespace pt {

enum class ScaleMode {
  SqrtPoints,   ///< divide attention logits by sqrt(N), N = number of keys
  SqrtHeadDim,  ///< conventional sqrt(d_head)
};

enum class AggregationMode {
  Scalar,       ///< one score per group vector
  Channelwise,  ///< one score per group vector and channel
};

struct ModelConfig {
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 128;
  std::size_t group_feature_dim = 512;
  std::size_t num_passes = 4;
  std::size_t num_groups = 4;
  std::size_t num_heads = 4;
  std::size_t k0 = 32;
  std::size_t n0 = 1024;
  double second_best_prob = 0.1;
  double routing_loss_weight = 0.1;
  double label_smoothing = 0.2;
  std::vector<std::size_t> head_dims{256, 128};
  /// Head dropout. Off by default: with noisy near-constant head inputs at
  /// init, p = 0.5 keeps small-data training at chance.
  double dropout = 0.0;
  std::size_t num_classes = 40;
  /// Residual MLP inner width; 0 means 2 * hidden_dim.
  std::size_t ffn_dim = 0;
  /// Hidden width of each per-group MLP; 0 means 2 * hidden_dim.
  std::size_t group_hidden_dim = 0;
  ScaleMode scale_mode = ScaleMode::SqrtPoints;
  AggregationMode aggregation = AggregationMode::Scalar;

  std::size_t ffn_width() const { return ffn_dim ? ffn_dim : 2 * hidden_dim; }
  std::size_t group_hidden_width() const { return group_hidden_dim ? group_hidden_dim : 2 * hidden_dim; }
  std::size_t head_dim() const { return hidden_dim / num_heads; }

  /// Throws Config errors for violated invariants.
  void validate() const;

  /// Ordered `key = value` pairs; the inverse of apply().
  std::vector<std::pair<std::string, std::string>> to_kv() const;
  /// Sets one field from its textual value. Returns false for unknown keys.
  bool apply(const std::string& key, const std::string& value);
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct GluParams {
  LinearParams<T> value;
  LinearParams<T> gate;
};

template <typename T>
struct NormParams {
  Tensor<T> gain;
  Tensor<T> bias;
};

/// Complete learnable state. Q/K/V/output projections are stored packed as
/// hidden x hidden matrices; head h owns columns [h*d, (h+1)*d).
template <typename T>
struct ModelParams {
  GluParams<T> embed_abs;
  GluParams<T> embed_rel;
  std::optional<LinearParams<T>> input_proj;  // only when embed_dim != hidden_dim
  LinearParams<T> query, key, value, output;
  NormParams<T> norm_attn, norm_ffn;
  LinearParams<T> ffn_in, ffn_out;
  LinearParams<T> router_in, router_out;
  std::vector<LinearParams<T>> group_in, group_out;
  LinearParams<T> score;
  std::vector<LinearParams<T>> head;
  LinearParams<T> classifier;

  /// Calls f(name, tensor) for every parameter in a fixed canonical order.
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  std::vector<Tensor<T>> tensors() const;
  std::size_t count() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, unit
/// gain / zero bias for layer norms. Values are drawn in double and rounded,
/// so float and double instances built from the same seed agree.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params);

// ---- forward-pass records ----------------------------------------------------

template <typename T>
struct RoutingResult {
  std::vector<int> assignments;
  std::vector<std::size_t> occupancy;
  Tensor<T> probabilities;  // [N, G]
  Tensor<T> soft_loss;      // scalar, differentiable
  double hard_loss = 0;
  std::size_t rerouted = 0;
};

struct PassTrace {
  /// heads x N x N; filled only when requested.
  std::vector<float> attention;
  /// Mean over heads and query rows, one value per point.
  std::vector<float> attention_mean;
  std::vector<int> assignments;
  std::vector<std::size_t> occupancy;
  std::vector<float> router_probabilities;  // N x G
  double hard_routing_loss = 0;
  double soft_routing_loss = 0;
};

struct ForwardTrace {
  std::size_t num_points = 0;
  std::size_t num_heads = 0;
  std::size_t num_groups = 0;
  std::vector<PassTrace> passes;
  /// M*G scores (scalar mode) or M*G x F (channel-wise), pass-major.
  std::vector<float> aggregation_weights;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
  bool record_attention = false;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;     // [num_classes]
  Tensor<T> retrieval;  // [head_dims.back()]
  std::vector<RoutingResult<T>> routing;
  ForwardTrace trace;
};

// ---- building blocks ---------------------------------------------------------

/// (x Wv + bv) * sigmoid(x Wg + bg)
template <typename T>
Tensor<T> glu(const Tensor<T>& x, const GluParams<T>& params);

/// floor(k0 * N / N0) clamped to [1, N - 1].
std::size_t adaptive_k(std::size_t n_points, const ModelConfig& config);

/// xyz is [N, 3]. Branch A embeds absolute coordinates, branch B max-pools
/// GLU features of neighbor offsets p_j - p_i over the adaptive kNN set.
template <typename T>
Tensor<T> embed_points(const Tensor<T>& xyz, const ModelParams<T>& params,
                       const ModelConfig& config);

template <typename T>
struct Attention {
  Tensor<T> output;   // [..., N, d]
  Tensor<T> weights;  // [..., N, N]
};

/// softmax(Q K^T / s) V over the key axis, s = sqrt(N) or sqrt(d).
template <typename T>
Attention<T> sdp_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           ScaleMode mode = ScaleMode::SqrtPoints);

template <typename T>
struct KeyValue {
  Tensor<T> keys;    // [heads, N, d]
  Tensor<T> values;  // [heads, N, d]
};

template <typename T>
KeyValue<T> project_key_value(const Tensor<T>& x_kv, const ModelParams<T>& params,
                              const ModelConfig& config);

/// Per-head projections of x_q against cached keys/values, SDP per head,
/// concatenation and output projection. Returns [N, hidden] plus the
/// [heads, N, N] attention weights.
template <typename T>
Attention<T> multi_head_attention(const Tensor<T>& x_q, const KeyValue<T>& kv,
                                  const ModelParams<T>& params, const ModelConfig& config);

template <typename T>
Attention<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                                  const ModelParams<T>& params, const ModelConfig& config);

template <typename T>
struct TransformerOutput {
  std::vector<Tensor<T>> passes;       // M tensors [N, hidden]
  std::vector<Tensor<T>> attention;    // M tensors [heads, N, N]
};

/// Pass 1 attends from the embeddings to themselves; pass m > 1 projects Q
/// from pass m-1 while reusing the pass-1 K and V. Each pass: MHA, residual,
/// layer norm, residual MLP, layer norm.
template <typename T>
TransformerOutput<T> iterative_transformer(const Tensor<T>& embeddings,
                                           const ModelParams<T>& params,
                                           const ModelConfig& config);

/// Router MLP + softmax, argmax assignment, and (training only) independent
/// rerouting of each point to its second-best group with probability
/// second_best_prob. `rng` may be null outside training.
template <typename T>
RoutingResult<T> group_route(const Tensor<T>& features, const ModelParams<T>& params,
                             const ModelConfig& config, bool training, std::mt19937_64* rng);

/// sum_g (N_g / N)^2 from hard counts. Throws Contract if the counts do not
/// sum to N.
double routing_loss(std::span<const std::size_t> occupancy, std::size_t n_points);

/// Same quantity from soft occupancy (column sums of the router
/// probabilities); differentiable.
template <typename T>
Tensor<T> soft_routing_loss(const Tensor<T>& probabilities);

/// Per-group MLP then channel max over the member points; an empty group
/// yields a constant zero vector. Returns G tensors of shape [group_feature_dim].
template <typename T>
std::vector<Tensor<T>> group_features(const Tensor<T>& features, const RoutingResult<T>& routing,
                                      const ModelParams<T>& params, const ModelConfig& config);

/// sum_i softmax(a x_i + b) x_i over every group vector of every pass.
template <typename T>
Tensor<T> weighted_aggregate(const std::vector<Tensor<T>>& group_vectors,
                             const ModelParams<T>& params, const ModelConfig& config,
                             Tensor<T>* weights_out = nullptr);

template <typename T>
struct HeadOutput {
  Tensor<T> logits;
  Tensor<T> retrieval;
};

/// MLP layers with dropout between them, then the linear classifier. The
/// retrieval feature is the last MLP output before dropout.
template <typename T>
HeadOutput<T> classify_head(const Tensor<T>& global_feature, const ModelParams<T>& params,
                            const ModelConfig& config, bool training, std::mt19937_64* rng);

/// Smooth cross entropy + lambda * mean soft routing loss over passes.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& logits, std::size_t label,
                     const std::vector<RoutingResult<T>>& routing, const ModelConfig& config);

template <typename T>
ForwardResult<T> forward(const Tensor<T>& xyz, const ModelParams<T>& params,
                         const ModelConfig& config, const ForwardOptions& options = {});

template <typename T>
ForwardResult<T> forward(const PointCloud& pc, const ModelParams<T>& params,
                         const ModelConfig& config, const ForwardOptions& options = {});

// ---- parameter accounting -------------------------------------------------------

struct ParameterReport {
  std::vector<std::pair<std::string, std::size_t>> modules;
  std::size_t total = 0;
  std::string formula;

  std::string to_text() const;
};

/// Closed-form count per sub-module. Independent of num_passes.
ParameterReport count_parameters(const ModelConfig& config);

// ---- inline template bodies -------------------------------------------------------

namespace detail {

template <typename P, typename F>
void visit_params(P& p, F&& f) {
  auto lin = [&](const std::string& name, auto& l) {
    f(name + ".weight", l.weight);
    f(name + ".bias", l.bias);
  };
  lin("embed.abs.value", p.embed_abs.value);
  lin("embed.abs.gate", p.embed_abs.gate);
  lin("embed.rel.value", p.embed_rel.value);
  lin("embed.rel.gate", p.embed_rel.gate);
  if (p.input_proj) lin("embed.proj", *p.input_proj);
  lin("transformer.query", p.query);
  lin("transformer.key", p.key);
  lin("transformer.value", p.value);
  lin("transformer.output", p.output);
  f(std::string("transformer.norm_attn.gain"), p.norm_attn.gain);
  f(std::string("transformer.norm_attn.bias"), p.norm_attn.bias);
  lin("transformer.ffn_in", p.ffn_in);
  lin("transformer.ffn_out", p.ffn_out);
  f(std::string("transformer.norm_ffn.gain"), p.norm_ffn.gain);
  f(std::string("transformer.norm_ffn.bias"), p.norm_ffn.bias);
  lin("group.router_in", p.router_in);
  lin("group.router_out", p.router_out);
  for (std::size_t g = 0; g < p.group_in.size(); ++g) {
    lin("group." + std::to_string(g) + ".in", p.group_in[g]);
    lin("group." + std::to_string(g) + ".out", p.group_out[g]);
  }
  lin("aggregate.score", p.score);
  for (std::size_t i = 0; i < p.head.size(); ++i) lin("head." + std::to_string(i), p.head[i]);
  lin("head.classifier", p.classifier);
}

}  // namespace detail

template <typename T>
template <typename F>
void ModelParams<T>::visit(F&& f) {
  detail::visit_params(*this, std::forward<F>(f));
}

template <typename T>
template <typename F>
void ModelParams<T>::visit(F&& f) const {
  detail::visit_params(*this, std::forward<F>(f));
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params) {
  auto lin = [](const LinearParams<From>& l) {
    return LinearParams<To>{cast<To>(l.weight, true), cast<To>(l.bias, true)};
  };
  auto glu_p = [&](const GluParams<From>& g) { return GluParams<To>{lin(g.value), lin(g.gate)}; };
  auto norm = [](const NormParams<From>& n) {
    return NormParams<To>{cast<To>(n.gain, true), cast<To>(n.bias, true)};
  };
  ModelParams<To> out;
  out.embed_abs = glu_p(params.embed_abs);
  out.embed_rel = glu_p(params.embed_rel);
  if (params.input_proj) out.input_proj = lin(*params.input_proj);
  out.query = lin(params.query);
  out.key = lin(params.key);
  out.value = lin(params.value);
  out.output = lin(params.output);
  out.norm_attn = norm(params.norm_attn);
  out.norm_ffn = norm(params.norm_ffn);
  out.ffn_in = lin(params.ffn_in);
  out.ffn_out = lin(params.ffn_out);
  out.router_in = lin(params.router_in);
  out.router_out = lin(params.router_out);
  for (const auto& g : params.group_in) out.group_in.push_back(lin(g));
  for (const auto& g : params.group_out) out.group_out.push_back(lin(g));
  out.score = lin(params.score);
  for (const auto& h : params.head) out.head.push_back(lin(h));
  out.classifier = lin(params.classifier);
  return out;
}

}  // namespace pt
