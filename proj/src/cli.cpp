#include "wsteg/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "wsteg/dataset.hpp"
#include "wsteg/detect.hpp"
#include "wsteg/digest.hpp"
#include "wsteg/error.hpp"
#include "wsteg/experiment.hpp"
#include "wsteg/imagerep.hpp"
#include "wsteg/rng.hpp"
#include "wsteg/steg.hpp"
#include "wsteg/weights_io.hpp"

namespace wsteg::cli {

namespace fs = std::filesystem;

namespace {

constexpr char kOutDirEnv[] = "WSTEG_OUT_DIR";

// Relative output paths land under $WSTEG_OUT_DIR when it is set.
fs::path resolve_out(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* base = std::getenv(kOutDirEnv); base && *base) return fs::path(base) / p;
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct PayloadFlags {
  std::string file;
  std::string synthetic;  // "BYTES,SEED"

  void add(CLI::App& app) {
    auto* f = app.add_option("--payload", file, "payload file (raw bytes, MSB-first)");
    auto* s = app.add_option("--synthetic-payload", synthetic, "seeded random payload: BYTES,SEED");
    f->excludes(s);
  }

  Payload load() const {
    if (!file.empty()) {
      Payload p = payload_from_bytes(read_file(file));
      if (p.size() == 0) throw ArgumentError("payload file is empty: " + file);
      return p;
    }
    if (!synthetic.empty()) {
      const auto parts = split_list(synthetic);
      if (parts.size() != 2) throw ArgumentError("--synthetic-payload expects BYTES,SEED");
      try {
        const auto bytes = std::stoull(parts[0]);
        if (bytes == 0) throw ArgumentError("--synthetic-payload needs at least one byte");
        return synthetic_payload(bytes, std::stoull(parts[1]));
      } catch (const std::logic_error&) {
        throw ArgumentError("--synthetic-payload expects BYTES,SEED");
      }
    }
    throw ArgumentError("one of --payload or --synthetic-payload is required");
  }
};

struct NetFlags {
  std::string arch = "osl-small";
  int embedding_dim = 0;
  std::string head;
  bool l2_normalize = false;

  void add(CLI::App& app) {
    app.add_option("--arch", arch, "network preset: osl-small | koch")->capture_default_str();
    app.add_option("--embedding-dim", embedding_dim, "override the embedding dimension");
    app.add_option("--head", head, "final nonlinearity: sigmoid | none");
    app.add_flag("--l2-normalize", l2_normalize, "L2-normalise embeddings");
  }

  ConvNetConfig build(std::size_t image_size) const {
    ConvNetConfig c = ConvNetConfig::preset(arch);
    c.input_size = static_cast<int>(image_size);
    if (embedding_dim) c.embedding_dim = embedding_dim;
    if (!head.empty()) {
      if (head != "sigmoid" && head != "none") throw ArgumentError("--head must be sigmoid or none");
      c.head = head == "sigmoid" ? Head::sigmoid : Head::none;
    }
    c.l2_normalize = l2_normalize;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::string strategy = "UB";
  double ub_lo = 0.5;
  double ub_hi = 1.25;
  int max_epochs = 100;
  double lr = 1e-4;
  double margin = 1.0;
  std::size_t batch = 0;

  void add(CLI::App& app) {
    app.add_option("--strategy", strategy, "ES | ST | UB")->capture_default_str();
    app.add_option("--ub-lo", ub_lo, "UB loss interval lower bound")->capture_default_str();
    app.add_option("--ub-hi", ub_hi, "UB loss interval upper bound")->capture_default_str();
    app.add_option("--max-epochs", max_epochs, "epoch cap for UB")->capture_default_str();
    app.add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app.add_option("--margin", margin, "triplet margin")->capture_default_str();
    app.add_option("--batch", batch, "triplets per batch (0 = all)")->capture_default_str();
  }

  TrainConfig build(std::uint64_t seed) const {
    TrainConfig t;
    t.strategy = strategy_from_name(strategy);
    t.ub_lo = ub_lo;
    t.ub_hi = ub_hi;
    t.max_epochs = max_epochs;
    t.lr = lr;
    t.margin = margin;
    t.batch_size = batch;
    t.seed = seed;
    t.validate();
    return t;
  }
};

std::vector<fs::path> model_files(const fs::path& in) {
  if (!fs::is_directory(in)) return {in};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".safetensors" || ext == ".f32" || ext == ".f16")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Steganography attacks on model weights and few-shot detection", "wsteg"};
  app.require_subcommand(1);

  // inspect
  std::string inspect_in;
  auto* inspect = app.add_subcommand("inspect", "List tensors, dtypes and non-finite counts");
  inspect->add_option("--in", inspect_in)->required();

  // embed
  std::string embed_in, embed_out;
  int embed_lsb = 0;
  bool embed_fill = false, allow_exponent = false;
  PayloadFlags embed_payload;
  auto* embed = app.add_subcommand("embed", "Hide a payload in the X LSBs of a model's weights");
  embed->add_option("--in", embed_in)->required();
  embed->add_option("--out", embed_out)->required();
  embed->add_option("--lsb", embed_lsb, "number of LSBs X")->required();
  embed->add_flag("--fill", embed_fill, "repeat/truncate the payload to fill every weight");
  embed->add_flag("--allow-exponent,!--mantissa-only", allow_exponent, "permit X beyond the mantissa");
  embed_payload.add(*embed);

  // extract
  std::string extract_in, extract_out;
  int extract_width = 0;
  std::size_t extract_bits = 0, extract_bytes = 0;
  auto* extract = app.add_subcommand("extract", "Read a payload back out of the X LSBs");
  extract->add_option("--in", extract_in)->required();
  extract->add_option("--out", extract_out)->required();
  extract->add_option("--lsb", extract_width)->required();
  auto* bits_opt = extract->add_option("--bits", extract_bits, "payload length in bits");
  auto* bytes_opt = extract->add_option("--bytes", extract_bytes, "payload length in bytes");
  bits_opt->excludes(bytes_opt);

  // imagify
  std::string imagify_in, imagify_out, imagify_rep = "grayscale-fourpart";
  std::size_t imagify_size = 0;
  auto* imagify = app.add_subcommand("imagify", "Render a model as a grayscale image (PGM)");
  imagify->add_option("--in", imagify_in)->required();
  imagify->add_option("--out", imagify_out)->required();
  imagify->add_option("--rep", imagify_rep)->capture_default_str();
  imagify->add_option("--size", imagify_size, "resize to SIZE x SIZE (0 keeps native size)");

  // synth-zoo
  std::string synth_out, synth_id;
  std::size_t synth_zoos = 4, synth_models = 4, synth_params = 10000;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth-zoo", "Write a synthetic model collection");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--id", synth_id, "collection id (default: directory name)");
  synth->add_option("--zoos", synth_zoos)->capture_default_str();
  synth->add_option("--models", synth_models, "models per zoo")->capture_default_str();
  synth->add_option("--params", synth_params, "parameters per model")->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();

  // build-dataset
  std::string bd_mc, bd_out, bd_rep = "grayscale-fourpart", bd_train;
  int bd_lsb = 0;
  std::size_t bd_size = 100;
  bool bd_no_fill = false, bd_allow_exponent = false, bd_benign_only = false;
  std::uint64_t bd_seed = 0;
  PayloadFlags bd_payload;
  auto* bd = app.add_subcommand("build-dataset", "Attack a collection and render benign/attacked images");
  bd->add_option("--mc", bd_mc, "model collection directory")->required();
  bd->add_option("--out", bd_out)->required();
  bd->add_option("--lsb", bd_lsb)->required();
  bd->add_option("--rep", bd_rep)->capture_default_str();
  bd->add_option("--size", bd_size)->capture_default_str();
  bd->add_option("--train-zoos", bd_train, "comma-separated training zoo ids");
  bd->add_option("--seed", bd_seed, "recorded in the manifest");
  bd->add_flag("--no-fill", bd_no_fill, "embed the payload once instead of filling");
  bd->add_flag("--allow-exponent,!--mantissa-only", bd_allow_exponent);
  bd->add_flag("--benign-only", bd_benign_only, "emit only label-0 samples");
  bd_payload.add(*bd);

  // train
  std::string train_dataset, train_out;
  std::uint64_t train_seed = 0;
  std::size_t train_models = 0;
  NetFlags train_net;
  TrainFlags train_flags;
  auto* tr = app.add_subcommand("train", "Train a triplet-loss detector on a dataset's train split");
  tr->add_option("--dataset", train_dataset)->required();
  tr->add_option("--out", train_out)->required();
  tr->add_option("--seed", train_seed)->capture_default_str();
  tr->add_option("--train-models", train_models, "use N training models (both versions); 0 = all");
  train_net.add(*tr);
  train_flags.add(*tr);

  // scan
  std::string scan_detector, scan_in, scan_mode = "centroid";
  std::size_t scan_k = 1;
  auto* scan = app.add_subcommand("scan", "Classify model files with a trained detector");
  scan->add_option("--detector", scan_detector)->required();
  scan->add_option("--in", scan_in, "model file or directory")->required();
  scan->add_option("--mode", scan_mode, "centroid | knn")->capture_default_str();
  scan->add_option("--k", scan_k)->capture_default_str();

  // report
  std::string report_detector, report_csv, report_json, report_split = "test";
  std::vector<std::string> report_datasets;
  std::size_t report_k = 1;
  int report_severities = 0;
  auto* rep = app.add_subcommand("report", "Evaluate a detector (OML accuracy and AL weighted metric)");
  rep->add_option("--detector", report_detector)->required();
  rep->add_option("--dataset", report_datasets, "dataset directory (repeatable)")->required();
  rep->add_option("--k", report_k)->capture_default_str();
  rep->add_option("--severities", report_severities, "s for the weighted metric (default: mantissa width)");
  rep->add_option("--split", report_split)->capture_default_str();
  rep->add_option("--out-csv", report_csv);
  rep->add_option("--out-json", report_json);

  // experiment
  ExperimentConfig ex;
  std::string ex_out;
  std::size_t ex_runs = 5;
  std::uint64_t ex_seed = 1;
  NetFlags ex_net;
  TrainFlags ex_train;
  auto* exp = app.add_subcommand("experiment", "Repeated seeded runs of the synthetic desk-scale protocol");
  exp->add_option("--out", ex_out)->required();
  exp->add_option("--zoos", ex.zoos)->capture_default_str();
  exp->add_option("--models", ex.models_per_zoo)->capture_default_str();
  exp->add_option("--params", ex.params)->capture_default_str();
  exp->add_option("--data-seed", ex.data_seed)->capture_default_str();
  exp->add_option("--lsb", ex.lsb)->capture_default_str();
  exp->add_option("--payload-bytes", ex.payload_bytes)->capture_default_str();
  exp->add_option("--payload-seed", ex.payload_seed)->capture_default_str();
  exp->add_option("--size", ex.image_size)->capture_default_str();
  exp->add_option("--train-zoos", ex.train_zoos, "number of training zoos")->capture_default_str();
  exp->add_option("--train-models", ex.train_models)->capture_default_str();
  exp->add_option("--k", ex.knn_k)->capture_default_str();
  exp->add_option("--runs", ex_runs)->capture_default_str();
  exp->add_option("--seed", ex_seed, "first run seed; runs use seed, seed+1, ...")->capture_default_str();
  ex_net.add(*exp);
  ex_train.add(*exp);

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (inspect->parsed()) {
      const ModelWeights m = load_model(inspect_in);
      out << "path," << m.source_path << "\n";
      for (const auto& [k, v] : m.metadata) out << "meta," << k << "," << v << "\n";
      std::size_t non_finite = 0;
      for (const auto& t : m.tensors) {
        std::string shape;
        for (auto d : t.shape) shape += (shape.empty() ? "" : "x") + std::to_string(d);
        const auto nf = count_non_finite(t);
        non_finite += nf;
        out << "tensor," << t.name << "," << dtype_name(t.dtype) << "," << shape << ",non_finite=" << nf << "\n";
      }
      out << "parameters," << m.parameter_count() << ",non_finite=" << non_finite << "\n";
      return kOk;
    }

    if (embed->parsed()) {
      if (embed_lsb < 1 || embed_lsb > 32) throw ArgumentError("--lsb must be in 1..32");
      const ModelWeights cover = load_model(embed_in);
      const DType dtype = flatten(cover).dtype;
      validate_lsb(embed_lsb, dtype, !allow_exponent);
      const Payload payload = embed_payload.load();
      const AttackSpec spec{embed_lsb, embed_fill, !allow_exponent};
      ModelWeights attacked = attack_model(cover, spec, payload);
      attacked.metadata["wsteg.source_sha256"] = sha256_hex(read_file(embed_in));
      attacked.metadata["wsteg.payload_sha256"] = payload_sha256(payload);
      attacked.metadata["wsteg.payload_bits"] = std::to_string(payload.size());
      attacked.metadata["wsteg.lsb"] = std::to_string(embed_lsb);
      attacked.metadata["wsteg.fill"] = embed_fill ? "true" : "false";
      if (payload.seed) attacked.metadata["wsteg.seed"] = std::to_string(*payload.seed);
      const fs::path dst = resolve_out(embed_out);
      save_model(attacked, dst);
      const std::size_t n = cover.parameter_count();
      const std::size_t embedded = embed_fill ? n * static_cast<std::size_t>(embed_lsb) : payload.size();
      out << "wrote " << dst.string() << " embedding_rate=" << fmt(embedding_rate_general(embedded, n, dtype.bits))
          << "\n";
      return kOk;
    }

    if (extract->parsed()) {
      const ModelWeights stego = load_model(extract_in);
      const WeightTensor flat = flatten(stego);
      std::size_t k = extract_bits ? extract_bits : extract_bytes * 8;
      if (!extract_bits && !extract_bytes) {
        const auto it = stego.metadata.find("wsteg.payload_bits");
        if (it == stego.metadata.end()) throw ArgumentError("pass --bits or --bytes (model records no payload length)");
        k = std::stoull(it->second);
      }
      const Payload p = extract_lsb(flat, extract_width, k);
      const fs::path dst = resolve_out(extract_out);
      write_file(dst, payload_to_bytes(p));
      out << "wrote " << dst.string() << " bits=" << p.size() << " sha256=" << payload_sha256(p) << "\n";
      return kOk;
    }

    if (imagify->parsed()) {
      const Representation r = representation_from_name(imagify_rep);
      const ModelWeights m = load_model(imagify_in);
      GrayscaleImage img = grayscale_fourpart(flatten(m));
      (void)r;
      if (imagify_size) img = resize(img, imagify_size, imagify_size);
      const fs::path dst = resolve_out(imagify_out);
      write_pgm(img, dst);
      out << "wrote " << dst.string() << " " << img.width << "x" << img.height << "\n";
      return kOk;
    }

    if (synth->parsed()) {
      const fs::path dst = resolve_out(synth_out);
      ModelCollection mc;
      mc.id = synth_id.empty() ? dst.filename().string() : synth_id;
      Rng rng(synth_seed);
      for (std::size_t z = 0; z < synth_zoos; ++z) {
        mc.zoos.push_back(synth_zoo("zoo" + std::to_string(z), synth_models, synth_params, rng.fork()));
      }
      save_collection(mc, dst);
      out << "wrote " << dst.string() << " zoos=" << mc.zoos.size() << " models=" << mc.model_count() << "\n";
      return kOk;
    }

    if (bd->parsed()) {
      const Representation r = representation_from_name(bd_rep);
      if (bd_size < 1) throw ArgumentError("--size must be positive");
      const auto train_zoos = split_list(bd_train);
      const ModelCollection benign = load_collection(bd_mc);
      const DType dtype = flatten(benign.zoos.front().models.front()).dtype;
      validate_lsb(bd_lsb, dtype, !bd_allow_exponent);
      const Payload payload = bd_payload.load();
      for (const auto& z : train_zoos) (void)benign.zoo(z);

      ModelCollection attacked;
      if (!bd_benign_only) attacked = build_attacked_collection(benign, {bd_lsb, !bd_no_fill, !bd_allow_exponent}, payload);
      Dataset ds = build_dataset(benign, attacked, r, bd_size, bd_lsb, payload_sha256(payload));
      ds.manifest.fill = !bd_no_fill;
      ds.manifest.seed = bd_seed ? bd_seed : payload.seed.value_or(0);
      const auto split = split_by_zoo(ds, {train_zoos.begin(), train_zoos.end()});
      assign_split(ds, {train_zoos.begin(), train_zoos.end()});
      if (split.test_empty) err << "warning: every zoo is in the training split; the test split is empty\n";
      const fs::path dst = resolve_out(bd_out);
      save_dataset(ds, dst);
      out << "wrote " << dst.string() << " samples=" << ds.samples.size() << " train=" << split.train.samples.size()
          << " test=" << split.test.samples.size() << "\n";
      return kOk;
    }

    if (tr->parsed()) {
      const Dataset ds = load_dataset(train_dataset);
      const ConvNetConfig net = [&] {
        ConvNetConfig c = train_net.build(ds.manifest.shape);
        c.init_seed = train_seed;
        return c;
      }();
      const TrainConfig tc = train_flags.build(train_seed);
      Dataset train_set = ds;
      if (train_models) {
        const auto split = split_by_zoo(ds, [&] {
          std::set<std::string> zoos;
          for (const auto& s : ds.manifest.samples)
            if (s.split == "train") zoos.insert(s.zoo);
          return zoos;
        }());
        train_set = subsample_models(split.train, train_models, train_seed);
      }
      TrainedDetector det = fit_detector(train_set, net, tc);
      det.provenance["seed"] = std::to_string(train_seed);
      const fs::path dst = resolve_out(train_out);
      write_file(dst, save_detector(det));
      out << "wrote " << dst.string() << " epochs=" << det.provenance["epochs"]
          << " final_loss=" << det.provenance["final_loss"] << "\n";
      return kOk;
    }

    if (scan->parsed()) {
      if (scan_mode != "centroid" && scan_mode != "knn") throw ArgumentError("--mode must be centroid or knn");
      const TrainedDetector det = load_detector(read_file(scan_detector));
      const auto rep_it = det.provenance.find("representation");
      const Representation r =
          representation_from_name(rep_it == det.provenance.end() ? "grayscale-fourpart" : rep_it->second);
      if (scan_mode == "knn" && (scan_k < 1 || scan_k > det.embeddings.size())) {
        throw ArgumentError("--k outside 1.." + std::to_string(det.embeddings.size()));
      }
      if (!fs::exists(scan_in)) throw FormatError("cannot open " + scan_in);
      const EmbeddingNet<float> net(det.config);
      for (const auto& file : model_files(scan_in)) {
        const ModelWeights m = load_model(file);
        const auto image = normalize(model_image(m, r, static_cast<std::size_t>(det.config.input_size)));
        const auto e = net.forward(det.params, image);
        if (scan_mode == "centroid") {
          const auto v = centroid_classify(det, e);
          out << file.string() << "," << v.label << "," << fmt(v.benign_distance) << "," << fmt(v.malicious_distance)
              << "\n";
        } else {
          const auto c = centroid_classify(det, e);
          const auto v = knn_classify(det, e, scan_k);
          out << file.string() << "," << v.label << "," << fmt(c.benign_distance) << "," << fmt(c.malicious_distance)
              << ",votes=" << v.benign_votes << ":" << v.malicious_votes << "\n";
        }
      }
      return kOk;
    }

    if (rep->parsed()) {
      const auto det_bytes = read_file(report_detector);
      const TrainedDetector det = load_detector(det_bytes);
      const auto rep_it = det.provenance.find("representation");
      const std::string det_rep = rep_it == det.provenance.end() ? "grayscale-fourpart" : rep_it->second;
      if (report_k < 1 || report_k > det.embeddings.size()) {
        throw ArgumentError("--k outside 1.." + std::to_string(det.embeddings.size()));
      }
      std::vector<EvalSample> samples;
      std::set<std::pair<std::string, std::string>> benign_seen;
      EvalReport report;
      report.provenance["detector_sha256"] = sha256_hex(det_bytes);
      int severities = report_severities;
      for (std::size_t i = 0; i < report_datasets.size(); ++i) {
        const Dataset ds = load_dataset(report_datasets[i]);
        if (representation_name(ds.manifest.representation) != det_rep ||
            ds.manifest.shape != static_cast<std::size_t>(det.config.input_size)) {
          throw FormatError(report_datasets[i] + ": representation or shape does not match the detector");
        }
        report.provenance["dataset" + std::to_string(i) + "_manifest_sha256"] = ds.manifest.sha256();
        for (std::size_t j = 0; j < ds.samples.size(); ++j) {
          const auto& rec = ds.manifest.samples[j];
          if (rec.split != report_split) continue;
          if (rec.label == 0 && !benign_seen.insert({rec.zoo, rec.model}).second) continue;
          samples.push_back({ds.samples[j].image, rec.label, rec.label ? ds.manifest.lsb : 0, rec.zoo});
        }
      }
      if (samples.empty()) throw ArgumentError("no samples in the '" + report_split + "' split");
      if (!severities) severities = 23;
      const auto seed_it = det.provenance.find("seed");
      const std::uint64_t run = seed_it == det.provenance.end() ? 0 : std::stoull(seed_it->second);
      const auto lsb_it = det.provenance.find("train_lsb");
      const int model_lsb = lsb_it == det.provenance.end() ? 0 : std::stoi(lsb_it->second);
      report.provenance["seed"] = std::to_string(run);

      std::vector<NormalizedImage> images;
      for (const auto& s : samples) images.push_back(s.image);
      const auto embeddings = embed_all(EmbeddingNet<float>(det.config), det.params, images);
      for (auto mode : {EvalMode::centroid, EvalMode::knn}) {
        const auto acc = evaluate_embeddings(det, embeddings, samples, mode, report_k);
        const auto rows = report_rows(run, model_lsb, mode, report_k, acc, severities);
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      }
      if (!report_csv.empty()) write_text(resolve_out(report_csv), report.to_csv());
      if (!report_json.empty()) write_text(resolve_out(report_json), report.to_json());
      if (report_csv.empty() && report_json.empty()) out << report.to_csv();
      return kOk;
    }

    if (exp->parsed()) {
      ex.net = ex_net.build(ex.image_size);
      ex.train = ex_train.build(0);
      if (ex_runs < 1) throw ArgumentError("--runs must be at least 1");
      const ExperimentData data = prepare_experiment(ex);
      std::vector<RunOutcome> outcomes;
      const fs::path dst = resolve_out(ex_out);
      for (std::size_t r = 0; r < ex_runs; ++r) {
        outcomes.push_back(run_experiment(data, ex, ex_seed + r));
        write_file(dst / ("detector_seed" + std::to_string(ex_seed + r) + ".wsd"), save_detector(outcomes.back().detector));
      }
      const ExperimentReport report = summarize(outcomes, ex);
      write_text(dst / "runs.csv", report.runs.to_csv());
      write_text(dst / "summary.csv", report.summary_csv());
      write_text(dst / "report.json", report.to_json());
      write_text(dst / "manifest.json", data.dataset.manifest.to_json());
      out << report.summary_csv();
      return kOk;
    }
  } catch (const CapacityError& e) {
    err << "capacity error: " << e.what() << "\n";
    return kCapacity;
  } catch (const ArgumentError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

int dispatch(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace wsteg::cli
