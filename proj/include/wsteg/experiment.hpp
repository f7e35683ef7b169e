#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsteg/dataset.hpp"
#include "wsteg/detect.hpp"
#include "wsteg/embed_net.hpp"

namespace wsteg {

// Trains on every "train" sample of `dataset` and wraps the result as a
// detector. Seeds, strategy, epochs and the manifest digest are recorded.
TrainedDetector fit_detector(const Dataset& dataset, const ConvNetConfig& net, const TrainConfig& train);

// Desk-scale protocol: synthetic zoos, one attacked collection, training on a
// few models of the training zoos, evaluation on the held-out zoos.
struct ExperimentConfig {
  std::size_t zoos = 4;
  std::size_t models_per_zoo = 4;
  std::size_t params = 10000;
  std::uint64_t data_seed = 1;

  int lsb = 23;
  bool fill = true;
  std::size_t payload_bytes = 64;
  std::uint64_t payload_seed = 7;

  std::size_t image_size = 100;
  std::size_t train_zoos = 2;
  std::size_t train_models = 3;  // benign + attacked version of each

  ConvNetConfig net = ConvNetConfig::osl_small();
  TrainConfig train;
  std::size_t knn_k = 1;
  int severities = 23;  // s used for the weighted metric
};

struct ExperimentData {
  Dataset dataset;  // split already assigned
  std::vector<std::string> train_zoos;
};

ExperimentData prepare_experiment(const ExperimentConfig& config);

struct RunOutcome {
  std::uint64_t seed = 0;
  TrainedDetector detector;
  Accuracies centroid;
  Accuracies knn;
  int epochs = 0;
  double final_loss = 0.0;
  std::vector<Embedding> test_embeddings;
};

// One seeded run: the seed drives initialisation, triplet shuffling and the
// choice of training models.
RunOutcome run_experiment(const ExperimentData& data, const ExperimentConfig& config, std::uint64_t seed);

struct SummaryRow {
  int model_lsb;
  std::string eval_type;
  std::string metric;
  double mean, median, lo, hi;
};

struct ExperimentReport {
  EvalReport runs;
  std::vector<SummaryRow> summary;

  std::string summary_csv() const;
  std::string to_json() const;
};

// Per-run rows plus mean, median and 95% bootstrap interval (10k resamples)
// of each metric across runs.
ExperimentReport summarize(const std::vector<RunOutcome>& outcomes, const ExperimentConfig& config);

}  // namespace wsteg
