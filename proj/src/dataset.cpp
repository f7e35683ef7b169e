#include "wsteg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"
#include "parallel.hpp"
#include "wsteg/digest.hpp"
#include "wsteg/error.hpp"
#include "wsteg/rng.hpp"

namespace wsteg {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

bool is_model_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".safetensors" || ext == ".f32" || ext == ".f16";
}

std::string model_stem(const std::string& member) { return fs::path(member).stem().string(); }

// Re-raises err with the failing model named, keeping its error class.
[[noreturn]] void rethrow_for_model(const std::string& model) {
  try {
    throw;
  } catch (const CapacityError& e) {
    throw CapacityError(model + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(model + ": " + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(model + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(model + ": " + e.what());
  }
}

}  // namespace

std::size_t ModelCollection::model_count() const {
  std::size_t n = 0;
  for (const auto& z : zoos) n += z.models.size();
  return n;
}

const LoadedZoo& ModelCollection::zoo(const std::string& zoo_id) const {
  for (const auto& z : zoos)
    if (z.info.id == zoo_id) return z;
  throw ArgumentError("unknown zoo: " + zoo_id);
}

LoadedZoo synth_zoo(const std::string& id, std::size_t n_models, std::size_t n_params, std::uint64_t seed) {
  if (n_models < 1 || n_params < 1) throw ArgumentError("synthetic zoo needs at least one model and one parameter");
  Rng rng(seed);

  // Shared layout: split n_params into a few layers of random relative size.
  const std::size_t layers = std::min<std::size_t>(n_params, 2 + rng.below(4));
  std::vector<double> share(layers);
  for (auto& s : share) s = rng.uniform(0.5, 1.5);
  const double total = std::accumulate(share.begin(), share.end(), 0.0);
  std::vector<std::size_t> sizes(layers, 1);
  std::size_t assigned = layers;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const auto extra = static_cast<std::size_t>(std::floor(share[l] / total * static_cast<double>(n_params - layers)));
    sizes[l] += extra;
    assigned += extra;
  }
  sizes.back() += n_params - assigned;

  LoadedZoo zoo;
  zoo.info.id = id;
  zoo.info.architecture = "synthetic-" + std::to_string(layers) + "-layer";
  zoo.info.task = "synthetic";
  for (std::size_t m = 0; m < n_models; ++m) {
    char name[48];
    std::snprintf(name, sizeof name, "model_%03zu.safetensors", m);
    zoo.info.members.push_back(id + "/" + name);
    ModelWeights model;
    for (std::size_t l = 0; l < layers; ++l) {
      const double scale = std::pow(10.0, rng.uniform(-3.0, -1.0));
      WeightTensor t;
      t.name = "layer" + std::to_string(l) + ".weight";
      t.shape = {sizes[l]};
      t.bits.reserve(sizes[l]);
      for (std::size_t i = 0; i < sizes[l]; ++i) t.bits.push_back(f32_word(static_cast<float>(scale * rng.normal())));
      model.tensors.push_back(std::move(t));
    }
    model.metadata["wsteg.synthetic_seed"] = std::to_string(seed);
    model.source_path = zoo.info.members.back();
    zoo.models.push_back(std::move(model));
  }
  return zoo;
}

ModelCollection load_collection(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("model collection directory not found: " + dir.string());
  ModelCollection mc;
  const auto index = dir / "collection.json";
  if (fs::exists(index)) {
    const auto bytes = read_file(index);
    try {
      const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
      mc.id = j.at("id").get<std::string>();
      for (const auto& z : j.at("zoos")) {
        LoadedZoo zoo;
        zoo.info.id = z.at("id").get<std::string>();
        zoo.info.architecture = z.value("architecture", "");
        zoo.info.task = z.value("task", "");
        zoo.info.members = z.at("members").get<std::vector<std::string>>();
        mc.zoos.push_back(std::move(zoo));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad collection.json: " + std::string(e.what()));
    }
  } else {
    mc.id = dir.filename().string();
    std::vector<fs::path> zoo_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory()) zoo_dirs.push_back(entry.path());
    std::sort(zoo_dirs.begin(), zoo_dirs.end());
    for (const auto& zd : zoo_dirs) {
      LoadedZoo zoo;
      zoo.info.id = zd.filename().string();
      std::vector<std::string> members;
      for (const auto& entry : fs::directory_iterator(zd))
        if (entry.is_regular_file() && is_model_file(entry.path()))
          members.push_back(zoo.info.id + "/" + entry.path().filename().string());
      std::sort(members.begin(), members.end());
      zoo.info.members = std::move(members);
      if (!zoo.info.members.empty()) mc.zoos.push_back(std::move(zoo));
    }
  }

  std::set<std::string> ids;
  for (auto& zoo : mc.zoos) {
    if (!ids.insert(zoo.info.id).second) throw FormatError("duplicate zoo id: " + zoo.info.id);
    if (zoo.info.members.empty()) throw FormatError("zoo " + zoo.info.id + " has no models");
    for (const auto& member : zoo.info.members) {
      try {
        zoo.models.push_back(load_model(dir / member));
      } catch (const Error&) {
        rethrow_for_model(member);
      }
      zoo.models.back().source_path = member;
    }
    const DType dtype = flatten(zoo.models.front()).dtype;
    for (const auto& m : zoo.models) {
      if (flatten(m).dtype != dtype) throw FormatError("zoo " + zoo.info.id + " mixes dtypes");
    }
  }
  if (mc.zoos.empty()) throw FormatError("model collection has no zoos: " + dir.string());
  return mc;
}

void save_collection(const ModelCollection& collection, const fs::path& dir) {
  ordered_json j;
  j["id"] = collection.id;
  j["zoos"] = ordered_json::array();
  for (const auto& zoo : collection.zoos) {
    j["zoos"].push_back({{"id", zoo.info.id},
                         {"architecture", zoo.info.architecture},
                         {"task", zoo.info.task},
                         {"members", zoo.info.members}});
    for (std::size_t i = 0; i < zoo.models.size(); ++i) save_model(zoo.models[i], dir / zoo.info.members[i]);
  }
  const std::string text = j.dump(2) + "\n";
  write_file(dir / "collection.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ModelCollection build_attacked_collection(const ModelCollection& benign, const AttackSpec& spec,
                                          const Payload& payload) {
  if (payload.size() == 0) throw ArgumentError("attack payload is empty");
  ModelCollection out;
  out.id = benign.id + "-x" + std::to_string(spec.lsb);
  const std::string digest = payload_sha256(payload);
  for (const auto& zoo : benign.zoos) {
    LoadedZoo attacked;
    attacked.info = zoo.info;
    attacked.models.resize(zoo.models.size());
    for (std::size_t i = 0; i < zoo.models.size(); ++i) {
      try {
        attacked.models[i] = attack_model(zoo.models[i], spec, payload);
      } catch (const Error&) {
        rethrow_for_model(zoo.info.members[i]);
      }
      auto& meta = attacked.models[i].metadata;
      meta["wsteg.lsb"] = std::to_string(spec.lsb);
      meta["wsteg.fill"] = spec.fill ? "true" : "false";
      meta["wsteg.payload_sha256"] = digest;
    }
    out.zoos.push_back(std::move(attacked));
  }
  return out;
}

// ---------------------------------------------------------------- manifest

std::string DatasetManifest::to_json() const {
  ordered_json j;
  j["mc_id"] = mc_id;
  j["X"] = lsb;
  j["fill"] = fill;
  j["payload_sha256"] = payload_sha256;
  j["representation"] = representation_name(representation);
  j["shape"] = shape;
  j["seed"] = seed;
  j["samples"] = ordered_json::array();
  for (const auto& s : samples) {
    j["samples"].push_back(
        {{"path", s.path}, {"zoo", s.zoo}, {"model", s.model}, {"label", s.label}, {"split", s.split}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.mc_id = j.at("mc_id").get<std::string>();
    m.lsb = j.at("X").get<int>();
    m.fill = j.value("fill", true);
    m.payload_sha256 = j.at("payload_sha256").get<std::string>();
    m.representation = representation_from_name(j.at("representation").get<std::string>());
    m.shape = j.at("shape").get<std::size_t>();
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.path = s.at("path").get<std::string>();
      r.zoo = s.at("zoo").get<std::string>();
      r.model = s.value("model", "");
      r.label = s.at("label").get<int>();
      r.split = s.at("split").get<std::string>();
      if (r.label != 0 && r.label != 1) throw FormatError("sample label must be 0 or 1: " + r.path);
      if (r.split != "train" && r.split != "test") throw FormatError("sample split must be train or test: " + r.path);
      m.samples.push_back(std::move(r));
    }
    std::map<std::string, std::string> zoo_split;
    for (const auto& s : m.samples) {
      const auto [it, inserted] = zoo_split.emplace(s.zoo, s.split);
      if (!inserted && it->second != s.split) throw FormatError("zoo " + s.zoo + " straddles the train/test split");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad dataset manifest: " + std::string(e.what()));
  }
}

std::string DatasetManifest::sha256() const { return sha256_hex(to_json()); }

// ---------------------------------------------------------------- datasets

Dataset build_dataset(const ModelCollection& benign, const ModelCollection& attacked, Representation rep,
                      std::size_t size, int lsb, const std::string& payload_sha) {
  if (size < 1) throw ArgumentError("image size must be positive");
  if (!attacked.zoos.empty()) {
    if (attacked.zoos.size() != benign.zoos.size()) throw ArgumentError("attacked collection has a different zoo set");
    for (std::size_t z = 0; z < benign.zoos.size(); ++z) {
      if (attacked.zoos[z].info.id != benign.zoos[z].info.id ||
          attacked.zoos[z].models.size() != benign.zoos[z].models.size()) {
        throw ArgumentError("attacked collection does not mirror zoo " + benign.zoos[z].info.id);
      }
    }
  }

  struct Job {
    const ModelWeights* model;
    SampleRecord record;
  };
  std::vector<Job> jobs;
  for (std::size_t z = 0; z < benign.zoos.size(); ++z) {
    const auto& zoo = benign.zoos[z];
    for (std::size_t i = 0; i < zoo.models.size(); ++i) {
      const std::string stem = model_stem(zoo.info.members[i]);
      const std::string base = "images/" + zoo.info.id + "/" + stem;
      jobs.push_back({&zoo.models[i], {base + ".benign.pgm", zoo.info.id, zoo.info.members[i], 0, "test"}});
      if (!attacked.zoos.empty()) {
        jobs.push_back({&attacked.zoos[z].models[i],
                        {base + ".x" + std::to_string(lsb) + ".pgm", zoo.info.id, zoo.info.members[i], 1, "test"}});
      }
    }
  }

  Dataset ds;
  ds.manifest.mc_id = benign.id;
  ds.manifest.lsb = lsb;
  ds.manifest.payload_sha256 = payload_sha;
  ds.manifest.representation = rep;
  ds.manifest.shape = size;
  ds.samples.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  detail::parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      auto& s = ds.samples[i];
      s.pixels = model_image(*jobs[i].model, rep, size);
      s.image = normalize(s.pixels);
      s.label = jobs[i].record.label;
      s.zoo = jobs[i].record.zoo;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error&) {
      rethrow_for_model(jobs[i].record.model);
    }
  }
  for (auto& j : jobs) ds.manifest.samples.push_back(std::move(j.record));
  return ds;
}

void assign_split(Dataset& dataset, const std::set<std::string>& train_zoos) {
  std::set<std::string> known;
  for (const auto& s : dataset.manifest.samples) known.insert(s.zoo);
  for (const auto& z : train_zoos)
    if (!known.contains(z)) throw ArgumentError("unknown training zoo: " + z);
  for (auto& s : dataset.manifest.samples) s.split = train_zoos.contains(s.zoo) ? "train" : "test";
}

SplitResult split_by_zoo(const Dataset& dataset, const std::set<std::string>& train_zoos) {
  Dataset labelled = dataset;
  assign_split(labelled, train_zoos);
  SplitResult out;
  out.train.manifest = labelled.manifest;
  out.test.manifest = labelled.manifest;
  out.train.manifest.samples.clear();
  out.test.manifest.samples.clear();
  for (std::size_t i = 0; i < labelled.samples.size(); ++i) {
    Dataset& side = labelled.manifest.samples[i].split == "train" ? out.train : out.test;
    side.manifest.samples.push_back(labelled.manifest.samples[i]);
    side.samples.push_back(labelled.samples[i]);
  }
  out.test_empty = out.test.samples.empty();
  return out;
}

Dataset subsample_models(const Dataset& dataset, std::size_t n_models, std::uint64_t seed) {
  if (n_models == 0) return dataset;
  std::vector<std::pair<std::string, std::string>> models;
  for (const auto& r : dataset.manifest.samples) {
    std::pair<std::string, std::string> key{r.zoo, r.model};
    if (std::find(models.begin(), models.end(), key) == models.end()) models.push_back(std::move(key));
  }
  Rng rng(seed);
  rng.shuffle(models);
  if (models.size() > n_models) models.resize(n_models);

  Dataset out;
  out.manifest = dataset.manifest;
  out.manifest.samples.clear();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& r = dataset.manifest.samples[i];
    if (std::find(models.begin(), models.end(), std::pair{r.zoo, r.model}) == models.end()) continue;
    out.manifest.samples.push_back(r);
    out.samples.push_back(dataset.samples[i]);
  }
  return out;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    write_pgm(dataset.samples[i].pixels, dir / dataset.manifest.samples[i].path);
  }
  const std::string text = dataset.manifest.to_json();
  write_file(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset load_dataset(const fs::path& dir) {
  const auto bytes = read_file(dir / "manifest.json");
  Dataset ds;
  ds.manifest = DatasetManifest::from_json(std::string(bytes.begin(), bytes.end()));
  for (const auto& r : ds.manifest.samples) {
    LabeledSample s;
    s.pixels = read_pgm(dir / r.path);
    if (s.pixels.height != ds.manifest.shape || s.pixels.width != ds.manifest.shape) {
      throw FormatError(r.path + ": image shape does not match the manifest");
    }
    s.image = normalize(s.pixels);
    s.label = r.label;
    s.zoo = r.zoo;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<EvalSample> eval_samples(const Dataset& dataset, const std::string& split) {
  std::vector<EvalSample> out;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    if (dataset.manifest.samples[i].split != split) continue;
    const auto& s = dataset.samples[i];
    out.push_back({s.image, s.label, s.label == 1 ? dataset.manifest.lsb : 0, s.zoo});
  }
  return out;
}

}  // namespace wsteg
