#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "wsteg/detect.hpp"
#include "wsteg/imagerep.hpp"
#include "wsteg/steg.hpp"
#include "wsteg/weights_io.hpp"

namespace wsteg {

// Models sharing one architecture and task.
struct ModelZoo {
  std::string id;
  std::string architecture;
  std::string task;
  std::vector<std::string> members;  // paths relative to the collection root
};

struct LoadedZoo {
  ModelZoo info;
  std::vector<ModelWeights> models;  // parallel to info.members
};

struct ModelCollection {
  std::string id;
  std::vector<LoadedZoo> zoos;

  std::size_t model_count() const;
  const LoadedZoo& zoo(const std::string& id) const;
};

// Gaussian stand-in for a trained zoo: every model has the same tensor layout
// (2-5 layers, drawn from the seed) and each tensor gets its own scale,
// log-uniform in [1e-3, 1e-1].
LoadedZoo synth_zoo(const std::string& id, std::size_t n_models, std::size_t n_params, std::uint64_t seed);

// Reads DIR/collection.json when present; otherwise every subdirectory is a
// zoo and every model file in it (sorted by name) a member.
ModelCollection load_collection(const std::filesystem::path& dir);
void save_collection(const ModelCollection& collection, const std::filesystem::path& dir);

// Every model replaced by its attacked version; zoo structure is kept.
ModelCollection build_attacked_collection(const ModelCollection& benign, const AttackSpec& spec,
                                          const Payload& payload);

struct SampleRecord {
  std::string path;  // image path relative to the dataset directory
  std::string zoo;
  std::string model;
  int label = 0;  // 0 benign, 1 malicious
  std::string split = "test";
};

// Provenance of a dataset: hp = (MC, (X, m), (I, sh)) plus the samples.
struct DatasetManifest {
  std::string mc_id;
  int lsb = 0;
  bool fill = true;
  std::string payload_sha256;
  Representation representation = Representation::grayscale_fourpart;
  std::size_t shape = 100;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  std::string sha256() const;
};

struct LabeledSample {
  GrayscaleImage pixels;   // resized 8-bit image as stored on disk
  NormalizedImage image;   // network input
  int label = 0;
  std::string zoo;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<LabeledSample> samples;  // parallel to manifest.samples
};

// benign -> label 0, attacked -> label 1. `attacked` may have no zoos (benign
// only); otherwise it must mirror the zoo structure of `benign`.
Dataset build_dataset(const ModelCollection& benign, const ModelCollection& attacked, Representation rep,
                      std::size_t size, int lsb, const std::string& payload_sha256);

// Marks samples of train_zoos as "train" and everything else as "test".
void assign_split(Dataset& dataset, const std::set<std::string>& train_zoos);

struct SplitResult {
  Dataset train;
  Dataset test;
  bool test_empty = false;  // every zoo went to training
};

SplitResult split_by_zoo(const Dataset& dataset, const std::set<std::string>& train_zoos);

// Keeps every sample of n_models models picked with a seeded shuffle (benign
// and attacked versions travel together). n_models == 0 keeps everything.
Dataset subsample_models(const Dataset& dataset, std::size_t n_models, std::uint64_t seed);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Samples of one split as evaluation inputs; attacked samples carry the
// manifest's LSB count as their severity.
std::vector<EvalSample> eval_samples(const Dataset& dataset, const std::string& split);

}  // namespace wsteg
