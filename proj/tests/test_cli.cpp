#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "temp_dir.hpp"
#include "wsteg/cli.hpp"
#include "wsteg/dataset.hpp"
#include "wsteg/weights_io.hpp"

using namespace wsteg;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "wsteg");
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string text(const std::filesystem::path& p) {
  const auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

}  // namespace

TEST_CASE("embed then extract recovers the payload") {
  TempDir dir("cli-embed");
  const auto model = synth_zoo("z", 1, 1000, 3).models[0];
  save_model(model, dir / "m.safetensors");
  const std::string secret = "hidden message";
  write_file(dir / "payload.bin", std::span(reinterpret_cast<const std::uint8_t*>(secret.data()), secret.size()));

  const auto e = run({"embed", "--in", (dir / "m.safetensors").string(), "--out", (dir / "s.safetensors").string(),
                      "--lsb", "8", "--payload", (dir / "payload.bin").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const auto x = run({"extract", "--in", (dir / "s.safetensors").string(), "--out", (dir / "out.bin").string(),
                      "--lsb", "8", "--bytes", std::to_string(secret.size())});
  REQUIRE_MESSAGE(x.code == 0, x.err);
  CHECK(text(dir / "out.bin") == secret);

  // Length taken from the metadata embed wrote.
  CHECK(run({"extract", "--in", (dir / "s.safetensors").string(), "--out", (dir / "meta.bin").string(), "--lsb", "8"})
            .code == 0);
  CHECK(text(dir / "meta.bin") == secret);

  const auto stego = load_model(dir / "s.safetensors");
  CHECK(stego.metadata.at("wsteg.lsb") == "8");
  CHECK(stego.tensors.size() == model.tensors.size());

  const auto i = run({"inspect", "--in", (dir / "s.safetensors").string()});
  CHECK(i.code == 0);
  CHECK(i.out.find(model.tensors[0].name) != std::string::npos);
}

TEST_CASE("exit codes") {
  TempDir dir("cli-codes");
  save_model(synth_zoo("z", 1, 10, 3).models[0], dir / "m.safetensors");
  const auto in = (dir / "m.safetensors").string();
  const auto out = (dir / "o.safetensors").string();

  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"embed", "--in", in, "--out", out}).code == cli::kUsage);
  CHECK(run({"embed", "--in", in, "--out", out, "--lsb", "0", "--synthetic-payload", "4,1"}).code == cli::kUsage);
  CHECK(run({"embed", "--in", in, "--out", out, "--lsb", "24", "--synthetic-payload", "4,1"}).code == cli::kUsage);
  CHECK(run({"embed", "--in", in, "--out", out, "--lsb", "24", "--allow-exponent", "--synthetic-payload", "4,1"})
            .code == cli::kOk);
  CHECK(run({"embed", "--in", in, "--out", out, "--lsb", "2"}).code == cli::kUsage);
  CHECK(run({"embed", "--in", (dir / "nope.safetensors").string(), "--out", out, "--lsb", "2", "--synthetic-payload",
             "4,1"})
            .code == cli::kData);
  const auto cap = run({"embed", "--in", in, "--out", out, "--lsb", "1", "--synthetic-payload", "100,1"});
  CHECK(cap.code == cli::kCapacity);
  CHECK_FALSE(cap.err.empty());
  CHECK(run({"embed", "--in", in, "--out", out, "--lsb", "1", "--fill", "--synthetic-payload", "100,1"}).code ==
        cli::kOk);

  write_file(dir / "junk.safetensors", std::vector<std::uint8_t>{1, 2, 3});
  CHECK(run({"inspect", "--in", (dir / "junk.safetensors").string()}).code == cli::kData);
}

TEST_CASE("relative outputs honour WSTEG_OUT_DIR") {
  TempDir dir("cli-outdir");
  save_model(synth_zoo("z", 1, 100, 3).models[0], dir / "m.safetensors");
  ::setenv("WSTEG_OUT_DIR", (dir / "outputs").c_str(), 1);
  const auto r = run({"imagify", "--in", (dir / "m.safetensors").string(), "--out", "img.pgm", "--size", "16"});
  ::unsetenv("WSTEG_OUT_DIR");
  CHECK(r.code == 0);
  CHECK(read_pgm(dir.path() / "outputs" / "img.pgm").width == 16);
}

TEST_CASE("dataset, train, scan and report") {
  TempDir dir("cli-pipeline");
  const auto mc = (dir / "mc").string();
  const auto ds = (dir / "ds").string();
  REQUIRE(run({"synth-zoo", "--out", mc, "--zoos", "3", "--models", "2", "--params", "2000", "--seed", "4"}).code ==
          0);
  const auto b = run({"build-dataset", "--mc", mc, "--out", ds, "--lsb", "23", "--synthetic-payload", "64,7",
                      "--train-zoos", "zoo0,zoo1", "--seed", "4"});
  REQUIRE_MESSAGE(b.code == 0, b.err);
  CHECK(load_dataset(ds).samples.size() == 12);

  const auto det = (dir / "det.wsd").string();
  const auto t = run({"train", "--dataset", ds, "--out", det, "--seed", "7", "--strategy", "ES"});
  REQUIRE_MESSAGE(t.code == 0, t.err);

  const auto zoo_dir = (dir / "mc" / "zoo2").string();
  const auto s1 = run({"scan", "--detector", det, "--in", zoo_dir});
  const auto s2 = run({"scan", "--detector", det, "--in", zoo_dir});
  REQUIRE(s1.code == 0);
  CHECK(s1.out == s2.out);
  const auto first = s1.out.find("model_000");
  const auto second = s1.out.find("model_001");
  CHECK(first != std::string::npos);
  CHECK(first < second);
  CHECK(run({"scan", "--detector", det, "--in", zoo_dir, "--mode", "knn", "--k", "3"}).out.find("votes=") !=
        std::string::npos);

  const auto csv = (dir / "report.csv").string();
  const auto r = run({"report", "--detector", det, "--dataset", ds, "--out-csv", csv});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = text(csv);
  CHECK(report.rfind("run,model_lsb,eval_type,metric,value\n", 0) == 0);
  CHECK(report.find("oml_accuracy") != std::string::npos);

  // Same seed, same detector bytes.
  const auto det2 = (dir / "det2.wsd").string();
  REQUIRE(run({"train", "--dataset", ds, "--out", det2, "--seed", "7", "--strategy", "ES"}).code == 0);
  CHECK(read_file(det) == read_file(det2));

  CHECK(run({"build-dataset", "--mc", mc, "--out", (dir / "bad").string(), "--lsb", "23", "--synthetic-payload",
             "64,7", "--train-zoos", "zoo9"})
            .code == cli::kUsage);
  CHECK(run({"train", "--dataset", (dir / "missing").string(), "--out", det}).code == cli::kData);
}
