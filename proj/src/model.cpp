#include "pt/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pt/errors.hpp"
#include "pt/ops.hpp"

namespace pt {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::Config, "invalid integer for '" + key + "': '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::Config, "invalid number for '" + key + "': '" + v + "'");
  return out;
}

}  // namespace

// ---- config ----------------------------------------------------------------------

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, msg);
  };
  need(embed_dim >= 2 && embed_dim % 2 == 0, "embed_dim must be even and >= 2");
  need(hidden_dim >= 2, "hidden_dim must be >= 2");
  need(num_heads >= 1 && hidden_dim % num_heads == 0, "hidden_dim must be divisible by num_heads");
  need(num_passes >= 1, "num_passes must be >= 1");
  need(num_groups >= 1, "num_groups must be >= 1");
  need(group_feature_dim >= 1, "group_feature_dim must be >= 1");
  need(k0 >= 1 && n0 >= 1, "k0 and n0 must be >= 1");
  need(second_best_prob >= 0 && second_best_prob < 1, "second_best_prob must lie in [0, 1)");
  need(routing_loss_weight >= 0, "routing_loss_weight must be >= 0");
  need(label_smoothing >= 0 && label_smoothing < 1, "label_smoothing must lie in [0, 1)");
  need(!head_dims.empty(), "head_dims must name at least one layer");
  for (std::size_t d : head_dims) need(d >= 1, "head_dims entries must be >= 1");
  need(dropout >= 0 && dropout < 1, "dropout must lie in [0, 1)");
  need(num_classes >= 2, "num_classes must be >= 2");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
  std::string heads;
  for (std::size_t i = 0; i < head_dims.size(); ++i)
    heads += (i ? "," : "") + std::to_string(head_dims[i]);
  return {
      {"embed_dim", std::to_string(embed_dim)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"group_feature_dim", std::to_string(group_feature_dim)},
      {"num_passes", std::to_string(num_passes)},
      {"num_groups", std::to_string(num_groups)},
      {"num_heads", std::to_string(num_heads)},
      {"k0", std::to_string(k0)},
      {"n0", std::to_string(n0)},
      {"second_best_prob", fmt_double(second_best_prob)},
      {"routing_loss_weight", fmt_double(routing_loss_weight)},
      {"label_smoothing", fmt_double(label_smoothing)},
      {"head_dims", heads},
      {"dropout", fmt_double(dropout)},
      {"num_classes", std::to_string(num_classes)},
      {"ffn_dim", std::to_string(ffn_dim)},
      {"group_hidden_dim", std::to_string(group_hidden_dim)},
      {"scale_mode", scale_mode == ScaleMode::SqrtPoints ? "sqrt_n" : "sqrt_dk"},
      {"aggregation", aggregation == AggregationMode::Scalar ? "scalar" : "channelwise"},
  };
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "embed_dim") embed_dim = parse_size(key, value);
  else if (key == "hidden_dim") hidden_dim = parse_size(key, value);
  else if (key == "group_feature_dim") group_feature_dim = parse_size(key, value);
  else if (key == "num_passes") num_passes = parse_size(key, value);
  else if (key == "num_groups") num_groups = parse_size(key, value);
  else if (key == "num_heads") num_heads = parse_size(key, value);
  else if (key == "k0") k0 = parse_size(key, value);
  else if (key == "n0") n0 = parse_size(key, value);
  else if (key == "second_best_prob") second_best_prob = parse_double(key, value);
  else if (key == "routing_loss_weight") routing_loss_weight = parse_double(key, value);
  else if (key == "label_smoothing") label_smoothing = parse_double(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "num_classes") num_classes = parse_size(key, value);
  else if (key == "ffn_dim") ffn_dim = parse_size(key, value);
  else if (key == "group_hidden_dim") group_hidden_dim = parse_size(key, value);
  else if (key == "head_dims") {
    head_dims.clear();
    std::istringstream in(value);
    std::string part;
    while (std::getline(in, part, ',')) head_dims.push_back(parse_size(key, part));
  } else if (key == "scale_mode") {
    if (value == "sqrt_n") scale_mode = ScaleMode::SqrtPoints;
    else if (value == "sqrt_dk") scale_mode = ScaleMode::SqrtHeadDim;
    else fail(ErrorKind::Config, "scale_mode must be sqrt_n or sqrt_dk, got '" + value + "'");
  } else if (key == "aggregation") {
    if (value == "scalar") aggregation = AggregationMode::Scalar;
    else if (value == "channelwise") aggregation = AggregationMode::Channelwise;
    else fail(ErrorKind::Config, "aggregation must be scalar or channelwise, got '" + value + "'");
  } else {
    return false;
  }
  return true;
}

// ---- parameters ------------------------------------------------------------------

template <typename T>
std::vector<Tensor<T>> ModelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  visit([&](const std::string&, const Tensor<T>& t) { out.push_back(t); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto linear = [&](std::size_t in, std::size_t out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<T> w(in * out), b(out, T(0));
    for (T& v : w) v = static_cast<T>(static_cast<float>(u(rng)));
    return LinearParams<T>{Tensor<T>({in, out}, std::move(w), true),
                           Tensor<T>({out}, std::move(b), true)};
  };
  auto norm = [](std::size_t n) {
    return NormParams<T>{Tensor<T>::full({n}, T(1), true), Tensor<T>::zeros({n}, true)};
  };
  const std::size_t E = config.embed_dim;
  const std::size_t H = config.hidden_dim;
  const std::size_t F = config.group_feature_dim;
  ModelParams<T> p;
  p.embed_abs = {linear(3, E / 2), linear(3, E / 2)};
  p.embed_rel = {linear(3, E / 2), linear(3, E / 2)};
  if (E != H) p.input_proj = linear(E, H);
  p.query = linear(H, H);
  p.key = linear(H, H);
  p.value = linear(H, H);
  p.output = linear(H, H);
  p.norm_attn = norm(H);
  p.ffn_in = linear(H, config.ffn_width());
  p.ffn_out = linear(config.ffn_width(), H);
  p.norm_ffn = norm(H);
  p.router_in = linear(H, H);
  p.router_out = linear(H, config.num_groups);
  for (std::size_t g = 0; g < config.num_groups; ++g) {
    p.group_in.push_back(linear(H, config.group_hidden_width()));
    p.group_out.push_back(linear(config.group_hidden_width(), F));
  }
  p.score = linear(F, config.aggregation == AggregationMode::Scalar ? 1 : F);
  std::size_t prev = F;
  for (std::size_t d : config.head_dims) {
    p.head.push_back(linear(prev, d));
    prev = d;
  }
  p.classifier = linear(prev, config.num_classes);
  return p;
}

// ---- building blocks ---------------------------------------------------------------

template <typename T>
Tensor<T> glu(const Tensor<T>& x, const GluParams<T>& params) {
  const Tensor<T> value = ops::linear(x, params.value.weight, params.value.bias);
  const Tensor<T> gate = ops::sigmoid(ops::linear(x, params.gate.weight, params.gate.bias));
  return ops::mul(value, gate);
}

std::size_t adaptive_k(std::size_t n_points, const ModelConfig& config) {
  if (n_points < 2) fail(ErrorKind::ModelInput, "adaptive_k needs at least 2 points");
  const std::size_t k = config.k0 * n_points / config.n0;
  return std::clamp<std::size_t>(k, 1, n_points - 1);
}

template <typename T>
Tensor<T> embed_points(const Tensor<T>& xyz, const ModelParams<T>& params,
                       const ModelConfig& config) {
  if (xyz.rank() != 2 || xyz.dim(1) != 3)
    fail(ErrorKind::ModelInput, "expected [N, 3] coordinates, got " + to_string(xyz.shape()));
  const std::size_t n = xyz.dim(0);
  if (n < 2) fail(ErrorKind::ModelInput, "embedding needs at least 2 points for kNN");
  const std::size_t k = adaptive_k(n, config);

  PointCloud pc;
  pc.points.resize(n);
  const auto xs = xyz.data();
  for (std::size_t i = 0; i < n; ++i)
    pc.points[i] = {static_cast<float>(xs[i * 3]), static_cast<float>(xs[i * 3 + 1]),
                    static_cast<float>(xs[i * 3 + 2])};
  const std::vector<std::size_t> nbr = knn_indices(pc, k);
  std::vector<std::size_t> self(n * k);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(self.begin() + static_cast<std::ptrdiff_t>(i * k), k, i);

  const Tensor<T> absolute = glu(xyz, params.embed_abs);
  const Tensor<T> offsets =
      ops::sub(ops::gather_rows(xyz, std::span<const std::size_t>(nbr)),
               ops::gather_rows(xyz, std::span<const std::size_t>(self)));
  const Tensor<T> rel = glu(offsets, params.embed_rel);
  const std::size_t half = config.embed_dim / 2;
  const Tensor<T> pooled = ops::max_reduce_with_argmax(ops::reshape(rel, {n, k, half}), 1).values;
  Tensor<T> emb = ops::concat<T>({absolute, pooled}, 1);
  if (params.input_proj) emb = ops::linear(emb, params.input_proj->weight, params.input_proj->bias);
  return emb;
}

template <typename T>
Attention<T> sdp_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           ScaleMode mode) {
  const std::size_t n_keys = k.dim(-2);
  const std::size_t d = q.dim(-1);
  const double divisor = std::sqrt(static_cast<double>(mode == ScaleMode::SqrtPoints ? n_keys : d));
  const Tensor<T> logits = ops::scale(ops::matmul_nt(q, k), static_cast<T>(1.0 / divisor));
  Attention<T> a;
  a.weights = ops::softmax(logits, -1);
  a.output = ops::matmul(a.weights, v);
  return a;
}

namespace {

// [N, H] -> [heads, N, d]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1) / heads;
  return ops::swap_axes01(ops::reshape(x, {n, heads, d}));
}

// [heads, N, d] -> [N, H]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const std::size_t heads = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t d = x.dim(2);
  return ops::reshape(ops::swap_axes01(x), {n, heads * d});
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const LinearParams<T>& l) {
  return ops::linear(x, l.weight, l.bias);
}

}  // namespace

template <typename T>
KeyValue<T> project_key_value(const Tensor<T>& x_kv, const ModelParams<T>& params,
                              const ModelConfig& config) {
  if (x_kv.rank() != 2 || x_kv.dim(1) != config.hidden_dim)
    fail(ErrorKind::Dimension, "attention input " + to_string(x_kv.shape()) + " vs hidden_dim " +
                                   std::to_string(config.hidden_dim));
  return {split_heads(dense(x_kv, params.key), config.num_heads),
          split_heads(dense(x_kv, params.value), config.num_heads)};
}

template <typename T>
Attention<T> multi_head_attention(const Tensor<T>& x_q, const KeyValue<T>& kv,
                                  const ModelParams<T>& params, const ModelConfig& config) {
  if (x_q.rank() != 2 || x_q.dim(1) != config.hidden_dim)
    fail(ErrorKind::Dimension, "attention query " + to_string(x_q.shape()) + " vs hidden_dim " +
                                   std::to_string(config.hidden_dim));
  const Tensor<T> q = split_heads(dense(x_q, params.query), config.num_heads);
  Attention<T> heads = sdp_attention(q, kv.keys, kv.values, config.scale_mode);
  return {dense(merge_heads(heads.output), params.output), heads.weights};
}

template <typename T>
Attention<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                                  const ModelParams<T>& params, const ModelConfig& config) {
  return multi_head_attention(x_q, project_key_value(x_kv, params, config), params, config);
}

template <typename T>
TransformerOutput<T> iterative_transformer(const Tensor<T>& embeddings,
                                           const ModelParams<T>& params,
                                           const ModelConfig& config) {
  const KeyValue<T> kv = project_key_value(embeddings, params, config);
  TransformerOutput<T> out;
  Tensor<T> x = embeddings;
  for (std::size_t m = 0; m < config.num_passes; ++m) {
    Attention<T> att = multi_head_attention(x, kv, params, config);
    const Tensor<T> a = ops::layer_norm(ops::add(x, att.output), params.norm_attn.gain,
                                        params.norm_attn.bias, -1);
    const Tensor<T> ffn = dense(ops::relu(dense(a, params.ffn_in)), params.ffn_out);
    x = ops::layer_norm(ops::add(a, ffn), params.norm_ffn.gain, params.norm_ffn.bias, -1);
    out.passes.push_back(x);
    out.attention.push_back(att.weights);
  }
  return out;
}

double routing_loss(std::span<const std::size_t> occupancy, std::size_t n_points) {
  const std::size_t total = std::accumulate(occupancy.begin(), occupancy.end(), std::size_t{0});
  if (n_points == 0 || total != n_points)
    fail(ErrorKind::Contract, "routing occupancy sums to " + std::to_string(total) +
                                  " but the cloud has " + std::to_string(n_points) + " points");
  double r = 0;
  for (std::size_t c : occupancy) {
    const double f = static_cast<double>(c) / static_cast<double>(n_points);
    r += f * f;
  }
  return r;
}

template <typename T>
Tensor<T> soft_routing_loss(const Tensor<T>& probabilities) {
  const std::size_t n = probabilities.dim(0);
  const Tensor<T> fractions = ops::scale(ops::sum_axis(probabilities, 0), T(1) / static_cast<T>(n));
  return ops::sum_all(ops::square(fractions));
}

template <typename T>
RoutingResult<T> group_route(const Tensor<T>& features, const ModelParams<T>& params,
                             const ModelConfig& config, bool training, std::mt19937_64* rng) {
  const std::size_t n = features.dim(0);
  const std::size_t G = config.num_groups;
  RoutingResult<T> r;
  r.probabilities = ops::softmax(dense(ops::relu(dense(features, params.router_in)), params.router_out), -1);
  const auto probs = r.probabilities.data();
  r.assignments.resize(n);
  const bool reroute = training && G > 1 && config.second_best_prob > 0;
  if (reroute && rng == nullptr) fail(ErrorKind::Contract, "training-mode routing needs an rng");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = probs.data() + i * G;
    std::size_t best = 0;
    for (std::size_t g = 1; g < G; ++g)
      if (row[g] > row[best]) best = g;
    std::size_t chosen = best;
    if (reroute && u(*rng) < config.second_best_prob) {
      std::size_t second = best == 0 ? 1 : 0;
      for (std::size_t g = 0; g < G; ++g)
        if (g != best && row[g] > row[second]) second = g;
      chosen = second;
      ++r.rerouted;
    }
    r.assignments[i] = static_cast<int>(chosen);
  }
  r.occupancy.assign(G, 0);
  for (int a : r.assignments) ++r.occupancy[static_cast<std::size_t>(a)];
  r.hard_loss = routing_loss(r.occupancy, n);
  r.soft_loss = soft_routing_loss(r.probabilities);
  return r;
}

template <typename T>
std::vector<Tensor<T>> group_features(const Tensor<T>& features, const RoutingResult<T>& routing,
                                      const ModelParams<T>& params, const ModelConfig& config) {
  const std::size_t G = config.num_groups;
  const auto grouped = ops::scatter_rows_by_group(
      features, std::span<const int>(routing.assignments), G);
  std::vector<Tensor<T>> out;
  out.reserve(G);
  for (std::size_t g = 0; g < G; ++g) {
    if (!grouped.groups[g].defined()) {
      out.push_back(Tensor<T>::zeros({config.group_feature_dim}));
      continue;
    }
    const Tensor<T> h = ops::relu(dense(grouped.groups[g], params.group_in[g]));
    const Tensor<T> f = ops::relu(dense(h, params.group_out[g]));
    out.push_back(ops::max_reduce_with_argmax(f, 0).values);
  }
  return out;
}

template <typename T>
Tensor<T> weighted_aggregate(const std::vector<Tensor<T>>& group_vectors,
                             const ModelParams<T>& params, const ModelConfig& config,
                             Tensor<T>* weights_out) {
  if (group_vectors.empty()) fail(ErrorKind::Contract, "weighted_aggregate needs a group vector");
  const std::size_t F = group_vectors.front().numel();
  std::vector<Tensor<T>> rows;
  rows.reserve(group_vectors.size());
  for (const auto& v : group_vectors) rows.push_back(ops::reshape(v, {1, F}));
  const Tensor<T> x = ops::concat(rows, 0);  // [M*G, F]
  const Tensor<T> weights = ops::softmax(dense(x, params.score), 0);
  if (weights_out) *weights_out = weights;
  if (config.aggregation == AggregationMode::Scalar)
    return ops::reshape(ops::matmul(ops::transpose(weights), x), {F});
  return ops::sum_axis(ops::mul(weights, x), 0);
}

template <typename T>
HeadOutput<T> classify_head(const Tensor<T>& global_feature, const ModelParams<T>& params,
                            const ModelConfig& config, bool training, std::mt19937_64* rng) {
  Tensor<T> x = ops::reshape(global_feature, {1, global_feature.numel()});
  HeadOutput<T> out;
  for (const auto& layer : params.head) {
    const Tensor<T> h = ops::relu(dense(x, layer));
    out.retrieval = ops::reshape(h, {h.numel()});
    x = (training && config.dropout > 0) ? ops::dropout(h, static_cast<T>(config.dropout), *rng) : h;
  }
  const Tensor<T> logits = dense(x, params.classifier);
  out.logits = ops::reshape(logits, {logits.numel()});
  return out;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& logits, std::size_t label,
                     const std::vector<RoutingResult<T>>& routing, const ModelConfig& config) {
  Tensor<T> loss =
      ops::smooth_cross_entropy(logits, label, static_cast<T>(config.label_smoothing));
  if (config.routing_loss_weight == 0 || routing.empty()) return loss;
  Tensor<T> route = routing.front().soft_loss;
  for (std::size_t m = 1; m < routing.size(); ++m) route = ops::add(route, routing[m].soft_loss);
  const double w = config.routing_loss_weight / static_cast<double>(routing.size());
  return ops::add(loss, ops::scale(route, static_cast<T>(w)));
}

template <typename T>
ForwardResult<T> forward(const Tensor<T>& xyz, const ModelParams<T>& params,
                         const ModelConfig& config, const ForwardOptions& options) {
  std::mt19937_64 rng(options.seed);
  const std::size_t n = xyz.dim(0);
  ForwardResult<T> result;
  ForwardTrace& trace = result.trace;
  trace.num_points = n;
  trace.num_heads = config.num_heads;
  trace.num_groups = config.num_groups;

  const Tensor<T> emb = embed_points(xyz, params, config);
  const TransformerOutput<T> tf = iterative_transformer(emb, params, config);

  std::vector<Tensor<T>> group_vectors;
  for (std::size_t m = 0; m < config.num_passes; ++m) {
    RoutingResult<T> routing = group_route(tf.passes[m], params, config, options.training, &rng);
    for (auto& v : group_features(tf.passes[m], routing, params, config))
      group_vectors.push_back(std::move(v));

    PassTrace pt;
    const auto att = tf.attention[m].data();
    const std::size_t heads = config.num_heads;
    pt.attention_mean.assign(n, 0.0f);
    std::vector<double> acc(n, 0.0);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) acc[j] += att[(h * n + i) * n + j];
    for (std::size_t j = 0; j < n; ++j)
      pt.attention_mean[j] = static_cast<float>(acc[j] / static_cast<double>(heads * n));
    if (options.record_attention) pt.attention.assign(att.begin(), att.end());
    pt.assignments = routing.assignments;
    pt.occupancy = routing.occupancy;
    pt.router_probabilities.assign(routing.probabilities.data().begin(),
                                   routing.probabilities.data().end());
    pt.hard_routing_loss = routing.hard_loss;
    pt.soft_routing_loss = static_cast<double>(routing.soft_loss.item());
    trace.passes.push_back(std::move(pt));
    result.routing.push_back(std::move(routing));
  }

  Tensor<T> weights;
  const Tensor<T> global = weighted_aggregate(group_vectors, params, config, &weights);
  trace.aggregation_weights.assign(weights.data().begin(), weights.data().end());
  HeadOutput<T> head = classify_head(global, params, config, options.training, &rng);
  result.logits = head.logits;
  result.retrieval = head.retrieval;
  return result;
}

template <typename T>
ForwardResult<T> forward(const PointCloud& pc, const ModelParams<T>& params,
                         const ModelConfig& config, const ForwardOptions& options) {
  if (pc.size() < 2) fail(ErrorKind::ModelInput, "cloud '" + pc.id + "' has fewer than 2 points");
  const Tensor<T> xyz({pc.size(), 3}, pc.flat<T>());
  return forward(xyz, params, config, options);
}

// ---- accounting ----------------------------------------------------------------------

std::string ParameterReport::to_text() const {
  std::ostringstream os;
  for (const auto& [name, n] : modules) os << name << '\t' << n << '\n';
  os << "total\t" << total << '\n';
  os << "formula\t" << formula << '\n';
  return os.str();
}

ParameterReport count_parameters(const ModelConfig& config) {
  config.validate();
  const std::size_t E = config.embed_dim;
  const std::size_t H = config.hidden_dim;
  const std::size_t F = config.group_feature_dim;
  const std::size_t G = config.num_groups;
  const std::size_t FF = config.ffn_width();
  const std::size_t GH = config.group_hidden_width();
  auto lin = [](std::size_t in, std::size_t out) { return in * out + out; };
  ParameterReport r;
  // two GLUs of two 3 -> E/2 maps each
  r.modules.emplace_back("embedding", 4 * lin(3, E / 2) + (E != H ? lin(E, H) : 0));
  r.modules.emplace_back("transformer", 4 * lin(H, H) + 4 * H + lin(H, FF) + lin(FF, H));
  r.modules.emplace_back("router", lin(H, H) + lin(H, G));
  r.modules.emplace_back("group_mlps", G * (lin(H, GH) + lin(GH, F)));
  r.modules.emplace_back("aggregation",
                         lin(F, config.aggregation == AggregationMode::Scalar ? 1 : F));
  std::size_t head = 0;
  std::size_t prev = F;
  for (std::size_t d : config.head_dims) {
    head += lin(prev, d);
    prev = d;
  }
  head += lin(prev, config.num_classes);
  r.modules.emplace_back("head", head);
  for (const auto& m : r.modules) r.total += m.second;
  r.formula =
      "embedding=4*(3*E/2+E/2)[+E*H+H if E!=H]; transformer=4*(H*H+H)+4*H+(H*FF+FF)+(FF*H+H); "
      "router=(H*H+H)+(H*G+G); group_mlps=G*((H*GH+GH)+(GH*F+F)); aggregation=F*S+S (S=1 scalar, "
      "S=F channelwise); head=sum over layers (in*out+out) incl. classifier; independent of M";
  return r;
}

#define PT_INSTANTIATE_MODEL(T)                                                                  \
  template struct ModelParams<T>;                                                                \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                     \
  template Tensor<T> glu(const Tensor<T>&, const GluParams<T>&);                                 \
  template Tensor<T> embed_points(const Tensor<T>&, const ModelParams<T>&, const ModelConfig&);  \
  template Attention<T> sdp_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                      ScaleMode);                                                \
  template KeyValue<T> project_key_value(const Tensor<T>&, const ModelParams<T>&,                \
                                         const ModelConfig&);                                    \
  template Attention<T> multi_head_attention(const Tensor<T>&, const KeyValue<T>&,               \
                                             const ModelParams<T>&, const ModelConfig&);         \
  template Attention<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&,                 \
                                             const ModelParams<T>&, const ModelConfig&);         \
  template TransformerOutput<T> iterative_transformer(const Tensor<T>&, const ModelParams<T>&,   \
                                                      const ModelConfig&);                       \
  template Tensor<T> soft_routing_loss(const Tensor<T>&);                                        \
  template RoutingResult<T> group_route(const Tensor<T>&, const ModelParams<T>&,                 \
                                        const ModelConfig&, bool, std::mt19937_64*);             \
  template std::vector<Tensor<T>> group_features(const Tensor<T>&, const RoutingResult<T>&,      \
                                                 const ModelParams<T>&, const ModelConfig&);     \
  template Tensor<T> weighted_aggregate(const std::vector<Tensor<T>>&, const ModelParams<T>&,    \
                                        const ModelConfig&, Tensor<T>*);                         \
  template HeadOutput<T> classify_head(const Tensor<T>&, const ModelParams<T>&,                  \
                                       const ModelConfig&, bool, std::mt19937_64*);              \
  template Tensor<T> total_loss(const Tensor<T>&, std::size_t,                                   \
                                const std::vector<RoutingResult<T>>&, const ModelConfig&);       \
  template ForwardResult<T> forward(const Tensor<T>&, const ModelParams<T>&, const ModelConfig&, \
                                    const ForwardOptions&);                                      \
  template ForwardResult<T> forward(const PointCloud&, const ModelParams<T>&,                    \
                                    const ModelConfig&, const ForwardOptions&);

PT_INSTANTIATE_MODEL(float)
PT_INSTANTIATE_MODEL(double)

}  // namespace pt
