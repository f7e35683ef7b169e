#include "wsteg/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "wsteg/error.hpp"
#include "wsteg/rng.hpp"

namespace wsteg {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrainedDetector fit_detector(const Dataset& dataset, const ConvNetConfig& net, const TrainConfig& train_config) {
  std::vector<NormalizedImage> images;
  std::vector<int> labels;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    if (dataset.manifest.samples[i].split != "train") continue;
    images.push_back(dataset.samples[i].image);
    labels.push_back(dataset.samples[i].label);
  }
  if (images.empty()) throw ArgumentError("dataset has no training samples");
  const TrainResult result = train(images, labels, net, train_config);
  TrainedDetector det = make_detector(net, result.params, images, labels, dataset.manifest.sha256());
  det.provenance["init_seed"] = std::to_string(net.init_seed);
  det.provenance["shuffle_seed"] = std::to_string(train_config.seed);
  det.provenance["strategy"] = strategy_name(train_config.strategy);
  det.provenance["epochs"] = std::to_string(result.epochs);
  det.provenance["final_loss"] = num(result.epoch_loss.back());
  det.provenance["learning_rate"] = num(train_config.lr);
  det.provenance["margin"] = num(train_config.margin);
  det.provenance["train_lsb"] = std::to_string(dataset.manifest.lsb);
  det.provenance["payload_sha256"] = dataset.manifest.payload_sha256;
  det.provenance["representation"] = representation_name(dataset.manifest.representation);
  return det;
}

ExperimentData prepare_experiment(const ExperimentConfig& config) {
  if (config.train_zoos >= config.zoos) throw ArgumentError("need at least one held-out zoo");
  ModelCollection benign;
  benign.id = "synthetic-mc-" + std::to_string(config.data_seed);
  Rng rng(config.data_seed);
  for (std::size_t z = 0; z < config.zoos; ++z) {
    benign.zoos.push_back(synth_zoo("zoo" + std::to_string(z), config.models_per_zoo, config.params, rng.fork()));
  }
  const Payload payload = synthetic_payload(config.payload_bytes, config.payload_seed);
  const AttackSpec spec{config.lsb, config.fill, true};
  const ModelCollection attacked = build_attacked_collection(benign, spec, payload);

  ExperimentData data;
  data.dataset = build_dataset(benign, attacked, Representation::grayscale_fourpart, config.image_size, config.lsb,
                               payload_sha256(payload));
  data.dataset.manifest.fill = config.fill;
  data.dataset.manifest.seed = config.data_seed;
  std::set<std::string> train_zoos;
  for (std::size_t z = 0; z < config.train_zoos; ++z) {
    train_zoos.insert(benign.zoos[z].info.id);
    data.train_zoos.push_back(benign.zoos[z].info.id);
  }
  assign_split(data.dataset, train_zoos);
  return data;
}

RunOutcome run_experiment(const ExperimentData& data, const ExperimentConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const std::uint64_t pick_seed = rng.fork();
  ConvNetConfig net = config.net;
  net.init_seed = rng.fork();
  TrainConfig tc = config.train;
  tc.seed = rng.fork();

  const SplitResult split = split_by_zoo(data.dataset, {data.train_zoos.begin(), data.train_zoos.end()});
  const Dataset train_set = subsample_models(split.train, config.train_models, pick_seed);

  RunOutcome out;
  out.seed = seed;
  out.detector = fit_detector(train_set, net, tc);
  out.detector.provenance["run_seed"] = std::to_string(seed);
  out.epochs = std::stoi(out.detector.provenance.at("epochs"));
  out.final_loss = std::stod(out.detector.provenance.at("final_loss"));

  const auto samples = eval_samples(split.test, "test");
  std::vector<NormalizedImage> images;
  for (const auto& s : samples) images.push_back(s.image);
  out.test_embeddings = embed_all(EmbeddingNet<float>(out.detector.config), out.detector.params, images);
  out.centroid = evaluate_embeddings(out.detector, out.test_embeddings, samples, EvalMode::centroid);
  out.knn = evaluate_embeddings(out.detector, out.test_embeddings, samples, EvalMode::knn, config.knn_k);
  return out;
}

ExperimentReport summarize(const std::vector<RunOutcome>& outcomes, const ExperimentConfig& config) {
  ExperimentReport report;
  report.runs.provenance["data_seed"] = std::to_string(config.data_seed);
  report.runs.provenance["payload_seed"] = std::to_string(config.payload_seed);
  report.runs.provenance["lsb"] = std::to_string(config.lsb);
  report.runs.provenance["zoos"] = std::to_string(config.zoos);
  report.runs.provenance["models_per_zoo"] = std::to_string(config.models_per_zoo);
  report.runs.provenance["params"] = std::to_string(config.params);
  for (const auto& o : outcomes) {
    for (auto mode : {EvalMode::centroid, EvalMode::knn}) {
      const auto& acc = mode == EvalMode::centroid ? o.centroid : o.knn;
      const auto rows = report_rows(o.seed, config.lsb, mode, config.knn_k, acc, config.severities);
      report.runs.rows.insert(report.runs.rows.end(), rows.begin(), rows.end());
    }
  }

  std::map<std::tuple<int, std::string, std::string>, std::vector<double>> groups;
  std::vector<std::tuple<int, std::string, std::string>> order;
  for (const auto& r : report.runs.rows) {
    auto key = std::make_tuple(r.model_lsb, r.eval_type, r.metric);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(r.value);
  }
  for (const auto& key : order) {
    const auto& values = groups.at(key);
    const Interval ci = bootstrap_interval(values, 10000, 0);
    report.summary.push_back(
        {std::get<0>(key), std::get<1>(key), std::get<2>(key), ci.mean, median_of(values), ci.lo, ci.hi});
  }
  return report;
}

std::string ExperimentReport::summary_csv() const {
  std::ostringstream out;
  out << "model_lsb,eval_type,metric,mean,median,ci_lo,ci_hi\n";
  for (const auto& s : summary) {
    out << s.model_lsb << ',' << s.eval_type << ',' << s.metric << ',' << num(s.mean) << ',' << num(s.median) << ','
        << num(s.lo) << ',' << num(s.hi) << '\n';
  }
  return out.str();
}

std::string ExperimentReport::to_json() const {
  auto j = nlohmann::ordered_json::parse(runs.to_json());
  j["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : summary) {
    j["summary"].push_back({{"model_lsb", s.model_lsb},
                            {"eval_type", s.eval_type},
                            {"metric", s.metric},
                            {"mean", s.mean},
                            {"median", s.median},
                            {"ci_lo", s.lo},
                            {"ci_hi", s.hi}});
  }
  return j.dump(2) + "\n";
}

}  // namespace wsteg
