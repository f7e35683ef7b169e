#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wsteg/imagerep.hpp"

namespace wsteg {

struct ConvBlock {
  int out_channels = 1;
  int kernel = 3;
  bool pool = false;  // 2x2 max pool, stride 2, floor
};

enum class Head { sigmoid, none };

// Valid convolutions + ReLU (+ optional pooling) per block, then a dense
// layer to the embedding.
struct ConvNetConfig {
  int input_size = 100;
  std::vector<ConvBlock> blocks;
  int embedding_dim = 128;
  Head head = Head::sigmoid;
  bool l2_normalize = false;
  std::uint64_t init_seed = 0;  // He-uniform initialisation

  static ConvNetConfig osl_small();
  static ConvNetConfig koch();
  static ConvNetConfig preset(const std::string& name);

  // Throws ArgumentError if a block shrinks the feature map below 1x1.
  void validate() const;

  struct LayerGeometry {
    int in_channels, in_size, conv_size, out_size;
  };
  std::vector<LayerGeometry> geometry() const;
  int flat_features() const;

  std::string to_json() const;
  static ConvNetConfig from_json(const std::string& text);
};

// One weight and bias tensor per conv block, then the dense layer last.
// Conv weights are [out][in][k][k]; dense weights are [D][features].
template <typename T>
struct NetParams {
  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> biases;

  std::size_t count() const;
  NetParams zeros_like() const;
  void add(const NetParams& other);
  void scale(T factor);

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

NetParams<float> init_params(const ConvNetConfig& config, std::uint64_t seed);

template <typename To, typename From>
NetParams<To> cast_params(const NetParams<From>& params) {
  NetParams<To> out;
  for (const auto& w : params.weights) out.weights.emplace_back(w.begin(), w.end());
  for (const auto& b : params.biases) out.biases.emplace_back(b.begin(), b.end());
  return out;
}

// T = float for training and inference; T = double is the shadow mode used to
// check gradients against finite differences.
template <typename T>
class EmbeddingNet {
 public:
  explicit EmbeddingNet(ConvNetConfig config);

  const ConvNetConfig& config() const { return config_; }

  // Activations kept for backward.
  struct Trace {
    std::vector<std::vector<T>> block_input;  // input of each block
    std::vector<std::vector<T>> activation;   // ReLU(conv) of each block
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::vector<T> features;  // flattened last block output
    std::vector<T> head_out;  // after sigmoid / identity
    std::vector<T> embedding;
  };

  std::vector<T> forward(const NetParams<T>& params, const NormalizedImage& image) const;
  void forward(const NetParams<T>& params, const NormalizedImage& image, Trace& trace) const;

  // Accumulates d(loss)/d(params) into grads given d(loss)/d(embedding).
  void backward(const NetParams<T>& params, const Trace& trace, std::span<const T> grad_embedding,
                NetParams<T>& grads) const;

 private:
  ConvNetConfig config_;
  std::vector<ConvNetConfig::LayerGeometry> geometry_;
};

struct Triplet {
  std::size_t anchor, positive, negative;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Every ordered same-label (anchor, positive) pair with every opposite-label
// negative, in sample order.
std::vector<Triplet> make_triplets(std::span<const int> labels);

template <typename T>
T triplet_loss(std::span<const T> anchor, std::span<const T> positive, std::span<const T> negative, T margin);

// Mean triplet loss over `batch` and its exact gradient, accumulated into
// grads (which must be shaped like params).
template <typename T>
T batch_loss_and_gradient(const EmbeddingNet<T>& net, const NetParams<T>& params,
                          const std::vector<NormalizedImage>& images, std::span<const Triplet> batch, T margin,
                          NetParams<T>& grads);

template <typename T>
struct AdamState {
  NetParams<T> m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(const NetParams<T>& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

template <typename T>
void adam_step(AdamState<T>& state, NetParams<T>& params, const NetParams<T>& grads, double lr);

enum class Strategy { ES, ST, UB };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct TrainConfig {
  Strategy strategy = Strategy::UB;
  double ub_lo = 0.5;
  double ub_hi = 1.25;
  int max_epochs = 100;
  double lr = 1e-4;
  double margin = 1.0;
  std::size_t batch_size = 0;  // 0: all triplets in one batch
  std::uint64_t seed = 0;      // triplet shuffling

  void validate() const;
};

struct TrainResult {
  NetParams<float> params;
  int epochs = 0;
  std::vector<double> epoch_loss;  // mean triplet loss seen during each epoch
};

// ES: one epoch. ST: five. UB: stop after the first epoch whose mean loss is
// inside [ub_lo, ub_hi], or at max_epochs.
TrainResult train(const std::vector<NormalizedImage>& images, const std::vector<int>& labels,
                  const ConvNetConfig& net_config, const TrainConfig& train_config);

// Forward passes over many images; order of the result matches the input.
std::vector<std::vector<float>> embed_all(const EmbeddingNet<float>& net, const NetParams<float>& params,
                                          const std::vector<NormalizedImage>& images);

}  // namespace wsteg
