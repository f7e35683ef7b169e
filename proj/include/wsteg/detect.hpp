#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsteg/embed_net.hpp"

namespace wsteg {

using Embedding = std::vector<float>;

// Embedding network plus the labelled training embeddings it was fitted on.
// centroids[i] is the mean of the stored label-i embeddings.
struct TrainedDetector {
  ConvNetConfig config;
  NetParams<float> params;
  std::vector<Embedding> embeddings;
  std::vector<int> labels;
  Embedding centroids[2];
  std::string manifest_digest;
  std::map<std::string, std::string> provenance;  // seed, strategy, epochs...

  Embedding embed(const NormalizedImage& image) const;
};

// Computes training embeddings and centroids. Needs one sample of each class.
TrainedDetector make_detector(const ConvNetConfig& config, NetParams<float> params,
                              const std::vector<NormalizedImage>& images, const std::vector<int>& labels,
                              std::string manifest_digest);

// Largest |stored centroid - recomputed mean| over all components.
double centroid_drift(const TrainedDetector& detector);

double l2_distance(std::span<const float> a, std::span<const float> b);

struct CentroidVerdict {
  int label;
  double benign_distance;
  double malicious_distance;
};

// Nearer centroid wins; equal distances go to label 1.
CentroidVerdict centroid_classify(const TrainedDetector& detector, std::span<const float> embedding);
CentroidVerdict centroid_classify(const TrainedDetector& detector, const NormalizedImage& image);

struct KnnVerdict {
  int label;
  int benign_votes;
  int malicious_votes;
};

// Majority of the k nearest points; distance ties keep stored order, vote
// ties go to label 1.
KnnVerdict knn_vote(std::span<const Embedding> points, std::span<const int> labels, std::span<const float> query,
                    std::size_t k);
KnnVerdict knn_classify(const TrainedDetector& detector, std::span<const float> embedding, std::size_t k);
KnnVerdict knn_classify(const TrainedDetector& detector, const NormalizedImage& image, std::size_t k);

// Compares centroid_classify with 1-NN over the two centroids for each query.
// The centroids are listed malicious first so the 1-NN stored-order tie rule
// matches the centroid tie rule.
bool centroids_as_1nn_equivalence_check(const TrainedDetector& detector, std::span<const Embedding> queries);
// Same check on `n_queries` random embeddings drawn around the centroids,
// plus the exact midpoint.
bool centroids_as_1nn_equivalence_check(const TrainedDetector& detector, std::size_t n_queries, std::uint64_t seed);

// 1/2 * (a_0 + sum_i (s-i+1) a_i / sum_i i), with s = accuracies.size().
double weighted_metric(double benign_accuracy, std::span<const double> accuracies);

enum class EvalMode { centroid, knn };
std::string eval_mode_name(EvalMode mode, std::size_t k);

struct EvalSample {
  NormalizedImage image;
  int label = 0;
  int lsb = 0;  // attack severity; 0 for benign samples
  std::string zoo;
};

struct Accuracies {
  double benign = 0.0;
  std::size_t benign_count = 0;
  std::map<int, double> per_lsb;
  std::map<int, std::size_t> per_lsb_count;
  std::map<std::string, double> per_zoo;
};

// Embeds every sample once and scores it under `mode`.
Accuracies evaluate(const TrainedDetector& detector, const std::vector<EvalSample>& samples, EvalMode mode,
                    std::size_t k = 1);
Accuracies evaluate_embeddings(const TrainedDetector& detector, const std::vector<Embedding>& embeddings,
                               const std::vector<EvalSample>& samples, EvalMode mode, std::size_t k = 1);

// Pooled accuracy over benign samples and samples attacked at trained_lsb.
double oml_accuracy(const Accuracies& acc, int trained_lsb);
// Weighted metric over severities 1..severities; every one must be present.
double al_metric(const Accuracies& acc, int severities);

struct ReportRow {
  std::uint64_t run = 0;
  int model_lsb = 0;
  std::string eval_type;
  std::string metric;
  double value = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::map<std::string, std::string> provenance;

  std::string to_csv() const;
  std::string to_json() const;
};

// Rows for one detector: OML accuracy, a_0 and each a_X, per-zoo accuracy and,
// when all severities are present, the AL weighted metric.
std::vector<ReportRow> report_rows(std::uint64_t run, int model_lsb, EvalMode mode, std::size_t k,
                                   const Accuracies& acc, int severities);

struct Interval {
  double mean, lo, hi;
};

// Mean with a 95% percentile bootstrap interval.
Interval bootstrap_interval(std::span<const double> values, std::size_t resamples, std::uint64_t seed);

std::vector<std::uint8_t> save_detector(const TrainedDetector& detector);
TrainedDetector load_detector(std::span<const std::uint8_t> bytes);

}  // namespace wsteg
