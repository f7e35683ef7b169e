#include "wsteg/embed_net.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "parallel.hpp"
#include "wsteg/error.hpp"
#include "wsteg/rng.hpp"

namespace wsteg {

// ---------------------------------------------------------------- config

ConvNetConfig ConvNetConfig::osl_small() {
  ConvNetConfig c;
  c.input_size = 100;
  c.blocks = {{16, 10, true}, {32, 7, true}, {32, 4, true}, {64, 4, false}};
  c.embedding_dim = 128;
  c.head = Head::sigmoid;
  return c;
}

ConvNetConfig ConvNetConfig::koch() {
  ConvNetConfig c;
  c.input_size = 105;
  c.blocks = {{64, 10, true}, {128, 7, true}, {128, 4, true}, {256, 4, false}};
  c.embedding_dim = 4096;
  c.head = Head::sigmoid;
  return c;
}

ConvNetConfig ConvNetConfig::preset(const std::string& name) {
  if (name == "osl-small") return osl_small();
  if (name == "koch") return koch();
  throw ArgumentError("unknown architecture preset: " + name);
}

std::vector<ConvNetConfig::LayerGeometry> ConvNetConfig::geometry() const {
  std::vector<LayerGeometry> out;
  int channels = 1;
  int size = input_size;
  for (const auto& b : blocks) {
    LayerGeometry g{channels, size, size - b.kernel + 1, 0};
    g.out_size = b.pool ? g.conv_size / 2 : g.conv_size;
    out.push_back(g);
    channels = b.out_channels;
    size = g.out_size;
  }
  return out;
}

void ConvNetConfig::validate() const {
  if (input_size < 1) throw ArgumentError("input size must be positive");
  if (embedding_dim < 2) throw ArgumentError("embedding dimension must be at least 2");
  for (const auto& b : blocks) {
    if (b.out_channels < 1 || b.kernel < 1) throw ArgumentError("conv block needs positive channels and kernel");
  }
  for (const auto& g : geometry()) {
    if (g.conv_size < 1 || g.out_size < 1) throw ArgumentError("conv blocks shrink the feature map below 1x1");
  }
}

int ConvNetConfig::flat_features() const {
  if (blocks.empty()) return input_size * input_size;
  const auto g = geometry().back();
  return blocks.back().out_channels * g.out_size * g.out_size;
}

std::string ConvNetConfig::to_json() const {
  nlohmann::ordered_json j;
  j["input_size"] = input_size;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : blocks) {
    j["blocks"].push_back({{"out_channels", b.out_channels}, {"kernel", b.kernel}, {"pool", b.pool}});
  }
  j["embedding_dim"] = embedding_dim;
  j["head"] = head == Head::sigmoid ? "sigmoid" : "none";
  j["l2_normalize"] = l2_normalize;
  j["init"] = "he-uniform";
  j["init_seed"] = init_seed;
  return j.dump();
}

ConvNetConfig ConvNetConfig::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ConvNetConfig c;
    c.input_size = j.at("input_size").get<int>();
    for (const auto& b : j.at("blocks")) {
      c.blocks.push_back({b.at("out_channels").get<int>(), b.at("kernel").get<int>(), b.at("pool").get<bool>()});
    }
    c.embedding_dim = j.at("embedding_dim").get<int>();
    const auto head = j.at("head").get<std::string>();
    if (head != "sigmoid" && head != "none") throw FormatError("unknown head: " + head);
    c.head = head == "sigmoid" ? Head::sigmoid : Head::none;
    c.l2_normalize = j.at("l2_normalize").get<bool>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad network config: ") + e.what());
  }
}

// ---------------------------------------------------------------- params

template <typename T>
std::size_t NetParams<T>::count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

template <typename T>
NetParams<T> NetParams<T>::zeros_like() const {
  NetParams out;
  for (const auto& w : weights) out.weights.emplace_back(w.size(), T{0});
  for (const auto& b : biases) out.biases.emplace_back(b.size(), T{0});
  return out;
}

template <typename T>
void NetParams<T>::add(const NetParams& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
}

template <typename T>
void NetParams<T>::scale(T factor) {
  for (auto& w : weights)
    for (auto& x : w) x *= factor;
  for (auto& b : biases)
    for (auto& x : b) x *= factor;
}

NetParams<float> init_params(const ConvNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  NetParams<float> p;
  auto he_uniform = [&](std::size_t count, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    std::vector<float> w(count);
    for (auto& x : w) x = static_cast<float>(rng.uniform(-limit, limit));
    return w;
  };
  const auto geom = config.geometry();
  for (std::size_t l = 0; l < config.blocks.size(); ++l) {
    const auto& b = config.blocks[l];
    const int fan_in = geom[l].in_channels * b.kernel * b.kernel;
    p.weights.push_back(he_uniform(static_cast<std::size_t>(b.out_channels) * fan_in, fan_in));
    p.biases.emplace_back(static_cast<std::size_t>(b.out_channels), 0.0f);
  }
  const int features = config.flat_features();
  p.weights.push_back(he_uniform(static_cast<std::size_t>(config.embedding_dim) * features, features));
  p.biases.emplace_back(static_cast<std::size_t>(config.embedding_dim), 0.0f);
  return p;
}

// ---------------------------------------------------------------- network

template <typename T>
EmbeddingNet<T>::EmbeddingNet(ConvNetConfig config) : config_(std::move(config)) {
  config_.validate();
  geometry_ = config_.geometry();
}

namespace {

template <typename T>
void conv_forward(const std::vector<T>& in, int in_c, int in_size, const std::vector<T>& w, const std::vector<T>& bias,
                  int out_c, int k, std::vector<T>& out) {
  const int os = in_size - k + 1;
  const std::size_t plane = static_cast<std::size_t>(os) * os;
  out.assign(static_cast<std::size_t>(out_c) * plane, T{0});
  for (int o = 0; o < out_c; ++o) {
    T* dst = out.data() + o * plane;
    std::fill(dst, dst + plane, bias[o]);
    for (int c = 0; c < in_c; ++c) {
      const T* src = in.data() + static_cast<std::size_t>(c) * in_size * in_size;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = w[((static_cast<std::size_t>(o) * in_c + c) * k + ky) * k + kx];
          for (int y = 0; y < os; ++y) {
            T* drow = dst + static_cast<std::size_t>(y) * os;
            const T* srow = src + static_cast<std::size_t>(y + ky) * in_size + kx;
            for (int x = 0; x < os; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const std::vector<T>& in, int in_c, int in_size, const std::vector<T>& w, int out_c, int k,
                   const std::vector<T>& grad_out, std::vector<T>& grad_w, std::vector<T>& grad_b,
                   std::vector<T>* grad_in) {
  const int os = in_size - k + 1;
  const std::size_t plane = static_cast<std::size_t>(os) * os;
  if (grad_in) grad_in->assign(in.size(), T{0});
  for (int o = 0; o < out_c; ++o) {
    const T* g = grad_out.data() + o * plane;
    T bsum{0};
    for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
    grad_b[o] += bsum;
    for (int c = 0; c < in_c; ++c) {
      const T* src = in.data() + static_cast<std::size_t>(c) * in_size * in_size;
      T* gin = grad_in ? grad_in->data() + static_cast<std::size_t>(c) * in_size * in_size : nullptr;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t wi = ((static_cast<std::size_t>(o) * in_c + c) * k + ky) * k + kx;
          T acc{0};
          for (int y = 0; y < os; ++y) {
            const T* grow = g + static_cast<std::size_t>(y) * os;
            const T* srow = src + static_cast<std::size_t>(y + ky) * in_size + kx;
            for (int x = 0; x < os; ++x) acc += grow[x] * srow[x];
          }
          grad_w[wi] += acc;
          if (gin) {
            const T wv = w[wi];
            for (int y = 0; y < os; ++y) {
              const T* grow = g + static_cast<std::size_t>(y) * os;
              T* irow = gin + static_cast<std::size_t>(y + ky) * in_size + kx;
              for (int x = 0; x < os; ++x) irow[x] += wv * grow[x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward(const std::vector<T>& in, int channels, int size, std::vector<T>& out,
                     std::vector<std::uint32_t>& argmax) {
  const int os = size / 2;
  out.resize(static_cast<std::size_t>(channels) * os * os);
  argmax.resize(out.size());
  std::size_t idx = 0;
  for (int c = 0; c < channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * size * size;
    for (int y = 0; y < os; ++y) {
      for (int x = 0; x < os; ++x, ++idx) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * size + 2 * x;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = base + static_cast<std::size_t>(2 * y + dy) * size + 2 * x + dx;
            if (in[i] > in[best]) best = i;
          }
        }
        out[idx] = in[best];
        argmax[idx] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
T sigmoid(T z) {
  return T{1} / (T{1} + std::exp(-z));
}

}  // namespace

template <typename T>
void EmbeddingNet<T>::forward(const NetParams<T>& params, const NormalizedImage& image, Trace& trace) const {
  if (image.height != static_cast<std::size_t>(config_.input_size) ||
      image.width != static_cast<std::size_t>(config_.input_size)) {
    throw ArgumentError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        ", network expects " + std::to_string(config_.input_size) + "x" +
                        std::to_string(config_.input_size));
  }
  const std::size_t n_blocks = config_.blocks.size();
  trace.block_input.resize(n_blocks);
  trace.activation.resize(n_blocks);
  trace.pool_argmax.resize(n_blocks);

  std::vector<T> current(image.pixels.begin(), image.pixels.end());
  for (std::size_t l = 0; l < n_blocks; ++l) {
    const auto& b = config_.blocks[l];
    const auto& g = geometry_[l];
    trace.block_input[l] = std::move(current);
    auto& act = trace.activation[l];
    conv_forward(trace.block_input[l], g.in_channels, g.in_size, params.weights[l], params.biases[l], b.out_channels,
                 b.kernel, act);
    for (auto& v : act) v = v > T{0} ? v : T{0};
    if (b.pool) {
      maxpool_forward(act, b.out_channels, g.conv_size, current, trace.pool_argmax[l]);
    } else {
      current = act;
      trace.pool_argmax[l].clear();
    }
  }
  trace.features = std::move(current);

  const std::size_t dim = static_cast<std::size_t>(config_.embedding_dim);
  const std::size_t nf = trace.features.size();
  const auto& w = params.weights[n_blocks];
  const auto& bias = params.biases[n_blocks];
  trace.head_out.assign(dim, T{0});
  for (std::size_t d = 0; d < dim; ++d) {
    T z = bias[d];
    const T* row = w.data() + d * nf;
    for (std::size_t j = 0; j < nf; ++j) z += row[j] * trace.features[j];
    trace.head_out[d] = config_.head == Head::sigmoid ? sigmoid(z) : z;
  }
  trace.embedding = trace.head_out;
  if (config_.l2_normalize) {
    T norm{0};
    for (auto v : trace.head_out) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > T{0})
      for (auto& v : trace.embedding) v /= norm;
  }
}

template <typename T>
std::vector<T> EmbeddingNet<T>::forward(const NetParams<T>& params, const NormalizedImage& image) const {
  Trace trace;
  forward(params, image, trace);
  return std::move(trace.embedding);
}

template <typename T>
void EmbeddingNet<T>::backward(const NetParams<T>& params, const Trace& trace, std::span<const T> grad_embedding,
                               NetParams<T>& grads) const {
  const std::size_t n_blocks = config_.blocks.size();
  const std::size_t dim = static_cast<std::size_t>(config_.embedding_dim);

  std::vector<T> g_head(grad_embedding.begin(), grad_embedding.end());
  if (config_.l2_normalize) {
    T norm{0};
    for (auto v : trace.head_out) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > T{0}) {
      T dot{0};
      for (std::size_t d = 0; d < dim; ++d) dot += trace.embedding[d] * grad_embedding[d];
      for (std::size_t d = 0; d < dim; ++d) g_head[d] = (grad_embedding[d] - trace.embedding[d] * dot) / norm;
    }
  }
  std::vector<T> g_z(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const T s = trace.head_out[d];
    g_z[d] = config_.head == Head::sigmoid ? g_head[d] * s * (T{1} - s) : g_head[d];
  }

  const std::size_t nf = trace.features.size();
  const auto& w = params.weights[n_blocks];
  auto& gw = grads.weights[n_blocks];
  auto& gb = grads.biases[n_blocks];
  std::vector<T> g_current(nf, T{0});
  for (std::size_t d = 0; d < dim; ++d) {
    const T gz = g_z[d];
    gb[d] += gz;
    if (gz == T{0}) continue;
    const T* row = w.data() + d * nf;
    T* grow = gw.data() + d * nf;
    for (std::size_t j = 0; j < nf; ++j) {
      grow[j] += gz * trace.features[j];
      g_current[j] += gz * row[j];
    }
  }

  for (std::size_t li = n_blocks; li-- > 0;) {
    const auto& b = config_.blocks[li];
    const auto& g = geometry_[li];
    const auto& act = trace.activation[li];
    std::vector<T> g_act;
    if (b.pool) {
      g_act.assign(act.size(), T{0});
      const auto& argmax = trace.pool_argmax[li];
      for (std::size_t i = 0; i < argmax.size(); ++i) g_act[argmax[i]] += g_current[i];
    } else {
      g_act = std::move(g_current);
    }
    for (std::size_t i = 0; i < act.size(); ++i)
      if (act[i] <= T{0}) g_act[i] = T{0};

    std::vector<T> g_in;
    conv_backward(trace.block_input[li], g.in_channels, g.in_size, params.weights[li], b.out_channels, b.kernel, g_act,
                  grads.weights[li], grads.biases[li], li > 0 ? &g_in : nullptr);
    g_current = std::move(g_in);
  }
}

// ---------------------------------------------------------------- loss

std::vector<Triplet> make_triplets(std::span<const int> labels) {
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] != labels[a]) out.push_back({a, p, n});
      }
    }
  }
  return out;
}

template <typename T>
T triplet_loss(std::span<const T> anchor, std::span<const T> positive, std::span<const T> negative, T margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw ArgumentError("triplet embeddings differ in dimension");
  }
  T dp{0}, dn{0};
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    dp += (anchor[i] - positive[i]) * (anchor[i] - positive[i]);
    dn += (anchor[i] - negative[i]) * (anchor[i] - negative[i]);
  }
  return std::max(T{0}, dp - dn + margin);
}

template <typename T>
T batch_loss_and_gradient(const EmbeddingNet<T>& net, const NetParams<T>& params,
                          const std::vector<NormalizedImage>& images, std::span<const Triplet> batch, T margin,
                          NetParams<T>& grads) {
  if (batch.empty()) return T{0};
  std::set<std::size_t> used;
  for (const auto& t : batch) used.insert({t.anchor, t.positive, t.negative});
  const std::vector<std::size_t> ids(used.begin(), used.end());
  std::vector<std::size_t> slot(images.size());
  for (std::size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;

  std::vector<typename EmbeddingNet<T>::Trace> traces(ids.size());
  detail::parallel_for(ids.size(), [&](std::size_t i) { net.forward(params, images[ids[i]], traces[i]); });

  const std::size_t dim = static_cast<std::size_t>(net.config().embedding_dim);
  std::vector<std::vector<T>> g_emb(ids.size(), std::vector<T>(dim, T{0}));
  const T inv = T{1} / static_cast<T>(batch.size());
  T total{0};
  for (const auto& t : batch) {
    const auto& a = traces[slot[t.anchor]].embedding;
    const auto& p = traces[slot[t.positive]].embedding;
    const auto& n = traces[slot[t.negative]].embedding;
    const T loss = triplet_loss<T>(a, p, n, margin);
    total += loss;
    if (loss <= T{0}) continue;
    auto& ga = g_emb[slot[t.anchor]];
    auto& gp = g_emb[slot[t.positive]];
    auto& gn = g_emb[slot[t.negative]];
    for (std::size_t d = 0; d < dim; ++d) {
      ga[d] += inv * T{2} * (n[d] - p[d]);
      gp[d] += inv * T{-2} * (a[d] - p[d]);
      gn[d] += inv * T{2} * (a[d] - n[d]);
    }
  }

  // Per-sample gradients summed in a fixed order.
  std::vector<NetParams<T>> partial(ids.size(), grads.zeros_like());
  detail::parallel_for(ids.size(), [&](std::size_t i) { net.backward(params, traces[i], g_emb[i], partial[i]); });
  for (const auto& p : partial) grads.add(p);
  return total * inv;
}

// ---------------------------------------------------------------- adam

template <typename T>
void adam_step(AdamState<T>& state, NetParams<T>& params, const NetParams<T>& grads, double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](std::vector<T>& p, const std::vector<T>& g, std::vector<T>& m, std::vector<T>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      p[i] = static_cast<T>(p[i] - lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l]);
    update(params.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l]);
  }
}

// ---------------------------------------------------------------- training

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::ES: return "ES";
    case Strategy::ST: return "ST";
    case Strategy::UB: return "UB";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "ES") return Strategy::ES;
  if (name == "ST") return Strategy::ST;
  if (name == "UB") return Strategy::UB;
  throw ArgumentError("unknown training strategy: " + name + " (expected ES, ST or UB)");
}

void TrainConfig::validate() const {
  if (!(ub_lo < ub_hi)) throw ArgumentError("UB interval needs lo < hi");
  if (!(margin > 0)) throw ArgumentError("triplet margin must be positive");
  if (!(lr > 0)) throw ArgumentError("learning rate must be positive");
  if (max_epochs < 1) throw ArgumentError("max epochs must be at least 1");
}

TrainResult train(const std::vector<NormalizedImage>& images, const std::vector<int>& labels,
                  const ConvNetConfig& net_config, const TrainConfig& cfg) {
  cfg.validate();
  if (images.size() != labels.size()) throw ArgumentError("images and labels differ in length");
  auto triplets = make_triplets(labels);
  if (triplets.empty()) throw ArgumentError("training set yields no triplets (need two samples of some class)");

  EmbeddingNet<float> net(net_config);
  TrainResult result{init_params(net_config, net_config.init_seed), 0, {}};
  AdamState<float> adam(result.params);
  Rng rng(cfg.seed);

  const int epochs = cfg.strategy == Strategy::ES ? 1 : cfg.strategy == Strategy::ST ? 5 : cfg.max_epochs;
  const std::size_t batch = cfg.batch_size == 0 ? triplets.size() : cfg.batch_size;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(triplets);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < triplets.size(); start += batch) {
      const std::size_t len = std::min(batch, triplets.size() - start);
      const std::span<const Triplet> chunk(triplets.data() + start, len);
      auto grads = result.params.zeros_like();
      const float loss =
          batch_loss_and_gradient(net, result.params, images, chunk, static_cast<float>(cfg.margin), grads);
      loss_sum += static_cast<double>(loss) * static_cast<double>(len);
      adam_step(adam, result.params, grads, cfg.lr);
    }
    const double mean = loss_sum / static_cast<double>(triplets.size());
    result.epoch_loss.push_back(mean);
    result.epochs = epoch + 1;
    if (cfg.strategy == Strategy::UB && mean >= cfg.ub_lo && mean <= cfg.ub_hi) break;
  }
  return result;
}

std::vector<std::vector<float>> embed_all(const EmbeddingNet<float>& net, const NetParams<float>& params,
                                          const std::vector<NormalizedImage>& images) {
  std::vector<std::vector<float>> out(images.size());
  detail::parallel_for(images.size(), [&](std::size_t i) { out[i] = net.forward(params, images[i]); });
  return out;
}

template struct NetParams<float>;
template struct NetParams<double>;
template class EmbeddingNet<float>;
template class EmbeddingNet<double>;
template float triplet_loss<float>(std::span<const float>, std::span<const float>, std::span<const float>, float);
template double triplet_loss<double>(std::span<const double>, std::span<const double>, std::span<const double>,
                                     double);
template float batch_loss_and_gradient<float>(const EmbeddingNet<float>&, const NetParams<float>&,
                                              const std::vector<NormalizedImage>&, std::span<const Triplet>, float,
                                              NetParams<float>&);
template double batch_loss_and_gradient<double>(const EmbeddingNet<double>&, const NetParams<double>&,
                                                const std::vector<NormalizedImage>&, std::span<const Triplet>, double,
                                                NetParams<double>&);
template void adam_step<float>(AdamState<float>&, NetParams<float>&, const NetParams<float>&, double);
template void adam_step<double>(AdamState<double>&, NetParams<double>&, const NetParams<double>&, double);

}  // namespace wsteg
