#include "wsteg/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wsteg/error.hpp"
#include "wsteg/rng.hpp"
#include "wsteg/weights_io.hpp"

namespace wsteg {

namespace {

constexpr char kFormatVersion[] = "1";

Embedding mean_of(const std::vector<Embedding>& embeddings, const std::vector<int>& labels, int label) {
  Embedding sum;
  std::size_t count = 0;
  std::vector<double> acc;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (labels[i] != label) continue;
    if (acc.empty()) acc.assign(embeddings[i].size(), 0.0);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += embeddings[i][d];
    ++count;
  }
  if (count == 0) throw ArgumentError("detector needs at least one sample of label " + std::to_string(label));
  for (auto v : acc) sum.push_back(static_cast<float>(v / static_cast<double>(count)));
  return sum;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

Embedding TrainedDetector::embed(const NormalizedImage& image) const {
  return EmbeddingNet<float>(config).forward(params, image);
}

TrainedDetector make_detector(const ConvNetConfig& config, NetParams<float> params,
                              const std::vector<NormalizedImage>& images, const std::vector<int>& labels,
                              std::string manifest_digest) {
  if (images.size() != labels.size()) throw ArgumentError("images and labels differ in length");
  TrainedDetector det;
  det.config = config;
  det.params = std::move(params);
  det.labels = labels;
  det.embeddings = embed_all(EmbeddingNet<float>(config), det.params, images);
  det.centroids[0] = mean_of(det.embeddings, det.labels, 0);
  det.centroids[1] = mean_of(det.embeddings, det.labels, 1);
  det.manifest_digest = std::move(manifest_digest);
  return det;
}

double centroid_drift(const TrainedDetector& detector) {
  double drift = 0.0;
  for (int label = 0; label < 2; ++label) {
    const auto recomputed = mean_of(detector.embeddings, detector.labels, label);
    for (std::size_t d = 0; d < recomputed.size(); ++d) {
      drift = std::max(drift, std::abs(static_cast<double>(recomputed[d]) - detector.centroids[label][d]));
    }
  }
  return drift;
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ArgumentError("embedding dimensions differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

CentroidVerdict centroid_classify(const TrainedDetector& detector, std::span<const float> embedding) {
  const double d0 = l2_distance(embedding, detector.centroids[0]);
  const double d1 = l2_distance(embedding, detector.centroids[1]);
  return {d0 < d1 ? 0 : 1, d0, d1};
}

CentroidVerdict centroid_classify(const TrainedDetector& detector, const NormalizedImage& image) {
  return centroid_classify(detector, detector.embed(image));
}

KnnVerdict knn_vote(std::span<const Embedding> points, std::span<const int> labels, std::span<const float> query,
                    std::size_t k) {
  if (points.size() != labels.size()) throw ArgumentError("points and labels differ in length");
  if (k < 1 || k > points.size()) {
    throw ArgumentError("k=" + std::to_string(k) + " outside 1.." + std::to_string(points.size()));
  }
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) order.emplace_back(l2_distance(query, points[i]), i);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  KnnVerdict v{0, 0, 0};
  for (std::size_t i = 0; i < k; ++i) (labels[order[i].second] == 1 ? v.malicious_votes : v.benign_votes)++;
  v.label = v.malicious_votes >= v.benign_votes ? 1 : 0;
  return v;
}

KnnVerdict knn_classify(const TrainedDetector& detector, std::span<const float> embedding, std::size_t k) {
  return knn_vote(detector.embeddings, detector.labels, embedding, k);
}

KnnVerdict knn_classify(const TrainedDetector& detector, const NormalizedImage& image, std::size_t k) {
  return knn_classify(detector, detector.embed(image), k);
}

bool centroids_as_1nn_equivalence_check(const TrainedDetector& detector, std::span<const Embedding> queries) {
  const std::vector<Embedding> points{detector.centroids[1], detector.centroids[0]};
  const std::vector<int> labels{1, 0};
  return std::all_of(queries.begin(), queries.end(), [&](const Embedding& q) {
    return centroid_classify(detector, q).label == knn_vote(points, labels, q, 1).label;
  });
}

bool centroids_as_1nn_equivalence_check(const TrainedDetector& detector, std::size_t n_queries, std::uint64_t seed) {
  const auto& c0 = detector.centroids[0];
  const auto& c1 = detector.centroids[1];
  double spread = l2_distance(c0, c1);
  if (spread == 0.0) spread = 1.0;
  Rng rng(seed);
  std::vector<Embedding> queries;
  queries.reserve(n_queries + 1);
  Embedding midpoint(c0.size());
  for (std::size_t d = 0; d < c0.size(); ++d) midpoint[d] = 0.5f * (c0[d] + c1[d]);
  queries.push_back(std::move(midpoint));
  const double noise = spread / std::sqrt(static_cast<double>(std::max<std::size_t>(c0.size(), 1)));
  for (std::size_t q = 0; q < n_queries; ++q) {
    const double t = rng.uniform(-0.5, 1.5);
    Embedding e(c0.size());
    for (std::size_t d = 0; d < c0.size(); ++d) {
      e[d] = static_cast<float>(c0[d] + t * (c1[d] - c0[d]) + noise * rng.normal());
    }
    queries.push_back(std::move(e));
  }
  return centroids_as_1nn_equivalence_check(detector, queries);
}

double weighted_metric(double benign_accuracy, std::span<const double> accuracies) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(benign_accuracy) || !std::all_of(accuracies.begin(), accuracies.end(), in_unit)) {
    throw ArgumentError("accuracies must lie in [0, 1]");
  }
  const std::size_t s = accuracies.size();
  if (s == 0) throw ArgumentError("weighted metric needs at least one attack severity");
  const double denom = static_cast<double>(s) * static_cast<double>(s + 1) / 2.0;
  double weighted = 0.0;
  for (std::size_t i = 1; i <= s; ++i) weighted += static_cast<double>(s - i + 1) * accuracies[i - 1];
  return 0.5 * (benign_accuracy + weighted / denom);
}

std::string eval_mode_name(EvalMode mode, std::size_t k) {
  if (mode == EvalMode::centroid) return "centroid";
  return k == 1 ? "1nn" : std::to_string(k) + "nn";
}

Accuracies evaluate_embeddings(const TrainedDetector& detector, const std::vector<Embedding>& embeddings,
                               const std::vector<EvalSample>& samples, EvalMode mode, std::size_t k) {
  if (embeddings.size() != samples.size()) throw ArgumentError("embeddings and samples differ in length");
  std::size_t benign_correct = 0;
  std::map<int, std::size_t> lsb_correct;
  std::map<std::string, std::pair<std::size_t, std::size_t>> zoo_counts;
  Accuracies acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int predicted = mode == EvalMode::centroid ? centroid_classify(detector, embeddings[i]).label
                                                     : knn_classify(detector, embeddings[i], k).label;
    const bool correct = predicted == samples[i].label;
    if (samples[i].label == 0) {
      ++acc.benign_count;
      benign_correct += correct;
    } else {
      ++acc.per_lsb_count[samples[i].lsb];
      lsb_correct[samples[i].lsb] += correct;
    }
    auto& z = zoo_counts[samples[i].zoo];
    z.first += correct;
    ++z.second;
  }
  if (acc.benign_count) acc.benign = static_cast<double>(benign_correct) / static_cast<double>(acc.benign_count);
  for (const auto& [lsb, count] : acc.per_lsb_count) {
    acc.per_lsb[lsb] = static_cast<double>(lsb_correct[lsb]) / static_cast<double>(count);
  }
  for (const auto& [zoo, c] : zoo_counts) {
    acc.per_zoo[zoo] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return acc;
}

Accuracies evaluate(const TrainedDetector& detector, const std::vector<EvalSample>& samples, EvalMode mode,
                    std::size_t k) {
  std::vector<NormalizedImage> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  const auto embeddings = embed_all(EmbeddingNet<float>(detector.config), detector.params, images);
  return evaluate_embeddings(detector, embeddings, samples, mode, k);
}

double oml_accuracy(const Accuracies& acc, int trained_lsb) {
  const auto it = acc.per_lsb_count.find(trained_lsb);
  if (it == acc.per_lsb_count.end()) {
    throw ArgumentError("no test samples attacked at " + std::to_string(trained_lsb) + " LSBs");
  }
  const double correct =
      acc.benign * static_cast<double>(acc.benign_count) + acc.per_lsb.at(trained_lsb) * static_cast<double>(it->second);
  return correct / static_cast<double>(acc.benign_count + it->second);
}

double al_metric(const Accuracies& acc, int severities) {
  if (acc.benign_count == 0) throw ArgumentError("weighted metric needs benign test samples");
  std::vector<double> a;
  for (int i = 1; i <= severities; ++i) {
    const auto it = acc.per_lsb.find(i);
    if (it == acc.per_lsb.end()) throw ArgumentError("no test samples attacked at " + std::to_string(i) + " LSBs");
    a.push_back(it->second);
  }
  return weighted_metric(acc.benign, a);
}

std::vector<ReportRow> report_rows(std::uint64_t run, int model_lsb, EvalMode mode, std::size_t k,
                                   const Accuracies& acc, int severities) {
  const std::string type = eval_mode_name(mode, k);
  std::vector<ReportRow> rows;
  if (acc.per_lsb_count.contains(model_lsb)) rows.push_back({run, model_lsb, type, "oml_accuracy", oml_accuracy(acc, model_lsb)});
  if (acc.benign_count) rows.push_back({run, model_lsb, type, "a_0", acc.benign});
  for (const auto& [lsb, a] : acc.per_lsb) rows.push_back({run, model_lsb, type, "a_" + std::to_string(lsb), a});
  for (const auto& [zoo, a] : acc.per_zoo) rows.push_back({run, model_lsb, type, "zoo_accuracy:" + zoo, a});
  bool complete = acc.benign_count > 0 && severities > 0;
  for (int i = 1; complete && i <= severities; ++i) complete = acc.per_lsb.contains(i);
  if (complete) rows.push_back({run, model_lsb, type, "al_weighted_metric", al_metric(acc, severities)});
  return rows;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "run,model_lsb,eval_type,metric,value\n";
  for (const auto& r : rows) {
    out << r.run << ',' << r.model_lsb << ',' << r.eval_type << ',' << r.metric << ',' << format_value(r.value) << '\n';
  }
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["provenance"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : provenance) j["provenance"][k] = v;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    j["rows"].push_back(
        {{"run", r.run}, {"model_lsb", r.model_lsb}, {"eval_type", r.eval_type}, {"metric", r.metric}, {"value", r.value}});
  }
  return j.dump(2) + "\n";
}

Interval bootstrap_interval(std::span<const double> values, std::size_t resamples, std::uint64_t seed) {
  if (values.empty()) throw ArgumentError("bootstrap needs at least one value");
  if (resamples == 0) throw ArgumentError("bootstrap needs at least one resample");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  Rng rng(seed);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[rng.below(values.size())];
    m = sum / n;
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  return {mean, quantile(0.025), quantile(0.975)};
}

// ---------------------------------------------------------------- file format

std::vector<std::uint8_t> save_detector(const TrainedDetector& det) {
  ModelWeights file;
  auto add = [&](std::string name, std::vector<std::size_t> shape, std::span<const float> values) {
    WeightTensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.bits.reserve(values.size());
    for (float v : values) t.bits.push_back(f32_word(v));
    file.tensors.push_back(std::move(t));
  };
  const auto geom = det.config.geometry();
  for (std::size_t l = 0; l < det.config.blocks.size(); ++l) {
    const auto& b = det.config.blocks[l];
    const auto o = static_cast<std::size_t>(b.out_channels);
    const auto k = static_cast<std::size_t>(b.kernel);
    add("conv" + std::to_string(l) + ".weight", {o, static_cast<std::size_t>(geom[l].in_channels), k, k},
        det.params.weights[l]);
    add("conv" + std::to_string(l) + ".bias", {o}, det.params.biases[l]);
  }
  const auto dim = static_cast<std::size_t>(det.config.embedding_dim);
  add("dense.weight", {dim, static_cast<std::size_t>(det.config.flat_features())}, det.params.weights.back());
  add("dense.bias", {dim}, det.params.biases.back());
  std::vector<float> flat;
  for (const auto& e : det.embeddings) flat.insert(flat.end(), e.begin(), e.end());
  add("train.embeddings", {det.embeddings.size(), dim}, flat);
  add("centroid.0", {dim}, det.centroids[0]);
  add("centroid.1", {dim}, det.centroids[1]);

  file.metadata["format_version"] = kFormatVersion;
  file.metadata["config"] = det.config.to_json();
  file.metadata["labels"] = nlohmann::json(det.labels).dump();
  file.metadata["manifest_sha256"] = det.manifest_digest;
  for (const auto& [k, v] : det.provenance) file.metadata["provenance." + k] = v;
  return write_container(file);
}

TrainedDetector load_detector(std::span<const std::uint8_t> bytes) {
  const ModelWeights file = read_container(bytes);
  auto meta = [&](const std::string& key) {
    const auto it = file.metadata.find(key);
    if (it == file.metadata.end()) throw FormatError("detector file lacks metadata '" + key + "'");
    return it->second;
  };
  if (meta("format_version") != kFormatVersion) {
    throw UnsupportedError("detector format version " + meta("format_version") + " is not supported");
  }
  TrainedDetector det;
  det.config = ConvNetConfig::from_json(meta("config"));
  try {
    det.labels = nlohmann::json::parse(meta("labels")).get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad detector labels: ") + e.what());
  }
  det.manifest_digest = meta("manifest_sha256");
  for (const auto& [k, v] : file.metadata) {
    if (k.starts_with("provenance.")) det.provenance[k.substr(11)] = v;
  }

  auto tensor = [&](const std::string& name, std::size_t expected) {
    const auto it = std::find_if(file.tensors.begin(), file.tensors.end(),
                                 [&](const WeightTensor& t) { return t.name == name; });
    if (it == file.tensors.end()) throw FormatError("detector file lacks tensor '" + name + "'");
    if (it->dtype != DType::f32() || it->size() != expected) {
      throw FormatError("detector tensor '" + name + "' has the wrong dtype or size");
    }
    std::vector<float> out;
    out.reserve(it->size());
    for (auto w : it->bits) out.push_back(f32_value(w));
    return out;
  };
  const NetParams<float> shape = init_params(det.config, 0);
  for (std::size_t l = 0; l < det.config.blocks.size(); ++l) {
    det.params.weights.push_back(tensor("conv" + std::to_string(l) + ".weight", shape.weights[l].size()));
    det.params.biases.push_back(tensor("conv" + std::to_string(l) + ".bias", shape.biases[l].size()));
  }
  det.params.weights.push_back(tensor("dense.weight", shape.weights.back().size()));
  det.params.biases.push_back(tensor("dense.bias", shape.biases.back().size()));

  const auto dim = static_cast<std::size_t>(det.config.embedding_dim);
  const auto flat = tensor("train.embeddings", det.labels.size() * dim);
  for (std::size_t i = 0; i < det.labels.size(); ++i) {
    det.embeddings.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
  det.centroids[0] = tensor("centroid.0", dim);
  det.centroids[1] = tensor("centroid.1", dim);
  return det;
}

}  // namespace wsteg
