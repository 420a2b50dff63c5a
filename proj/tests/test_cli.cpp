#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "great/checkpoint.hpp"
#include "great/eval.hpp"

using namespace great;
namespace fs = std::filesystem;

namespace {

const char* kManifest = R"({
  "name": "cli4", "n_segments": 2,
  "start": "2000-01-01", "train_end": "2000-06-30", "end": "2000-08-31",
  "domains": [
    {"name": "P", "role": "primary_source", "seed": 1, "k": 0.35},
    {"name": "A", "seed": 2, "k": 0.15, "gw_frac": 0.3},
    {"name": "B", "seed": 3, "k": 0.25, "gw_frac": 0.2},
    {"name": "C", "seed": 4, "k": 0.45, "shade": 0.2}
  ]})";

const char* kConfig =
    "# tiny\n"
    "hidden_dim = 4\ntransform_width = 5\nwindow_length = 30\nwindow_stride = 30\nbatch_size = 4\n"
    "pretrain_epochs = 2\npretrain_lr = 0.01\ntransform_epochs = 1\nbilevel_epochs = 2\niterations_per_epoch = 2\n";

struct Workspace {
  fs::path dir = fs::temp_directory_path() / "great_test_cli";
  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_text(dir / "m.json", kManifest);
    write_text(dir / "tiny.cfg", kConfig);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result great_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "great");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(great_cli({}).code == cli::kExitUsage);
  CHECK(great_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(great_cli({"generate"}).code == cli::kExitUsage);
  CHECK(great_cli({"--help"}).code == cli::kExitOk);
  CHECK(great_cli({"train", "--help"}).out.find("--upper_lr") != std::string::npos);
  const Workspace ws;
  const Result bad = great_cli({"pretrain", "--manifest", ws("m.json"), "--out", ws("x"), "--alpha", "fast"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("'alpha'") != std::string::npos);
  CHECK(great_cli({"pretrain", "--out", ws("x")}).code == cli::kExitUsage);
}

TEST_CASE("end-to-end commands are deterministic") {
  const Workspace ws;
  const std::vector<std::string> base = {"--manifest", ws("m.json"), "--config", ws("tiny.cfg")};
  const auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), base.begin(), base.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return great_cli(head);
  };

  REQUIRE(great_cli({"generate", "--manifest", ws("m.json"), "--out", ws("data")}).code == 0);
  for (const char* d : {"P", "A", "B", "C"}) CHECK(fs::exists(ws("data") + "/" + d + ".csv"));

  REQUIRE(with({"pretrain"}, {"--out", ws("pre1.json")}).code == 0);
  REQUIRE(with({"pretrain"}, {"--data", ws("data"), "--out", ws("pre2.json")}).code == 0);
  CHECK(read_text(ws("pre1.json")) == read_text(ws("pre2.json")));

  const Result t1 = with({"train"}, {"--aux", "A", "--sparsity", "0.05", "--pretrained", ws("pre1.json"), "--out",
                                     ws("t1.json"), "--log", ws("t1.jsonl")});
  REQUIRE(t1.code == 0);
  const Result t2 = with({"train"}, {"--aux", "A", "--sparsity", "0.05", "--out", ws("t2.json")});
  REQUIRE(t2.code == 0);
  CHECK(read_text(ws("t1.json")) == read_text(ws("t2.json")));
  const std::string log = read_text(ws("t1.jsonl"));
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);

  REQUIRE(with({"evaluate"}, {"--checkpoint", ws("t1.json"), "--out", ws("e1.json")}).code == 0);
  REQUIRE(with({"evaluate"}, {"--checkpoint", ws("t2.json"), "--out", ws("e2.json")}).code == 0);
  CHECK(read_text(ws("e1.json")) == read_text(ws("e2.json")));
  CHECK(read_text(ws("e1.json")).find("\"C\"") != std::string::npos);

  const Result attr = with({"attribute"}, {"--checkpoint", ws("t1.json"), "--targets", "B", "--steps", "16", "--out",
                                           ws("attr.csv")});
  REQUIRE(attr.code == 0);
  const std::string csv = read_text(ws("attr.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
  CHECK(csv.rfind("feature,model/B\n", 0) == 0);

  REQUIRE(with({"export-augmented"}, {"--checkpoint", ws("t1.json"), "--out", ws("aug.csv")}).code == 0);
  const DomainDataset aug = load_csv(ws("aug.csv"));
  REQUIRE(aug.segments.size() == 2);
  CHECK(aug.segments[0].id == "P_0_aug");

  for (const char* out : {"x1", "x2"}) {
    REQUIRE(with({"experiment"}, {"--aux", "A", "--sparsity", "0.05", "--seeds", "2", "--checkpoints", "--out", ws(out)})
                .code == 0);
  }
  for (const char* f : {"metrics.json", "curves.csv", "attribution.csv", "seed_0.ckpt.json", "seed_1.ckpt.json"}) {
    CHECK(read_text(ws("x1") + "/" + f) == read_text(ws("x2") + "/" + f));
  }
  const MetricsReport r = load_report(ws("x1"));
  CHECK(r.targets.size() == 2);
  CHECK(r.seeds.size() == 2);
  CHECK(read_text(ws("x1") + "/seed_0.ckpt.json") == read_text(ws("t1.json")));

  const Result rot = with({"experiment"}, {"--setting", "multi", "--sparsity", "0.05", "--seeds", "1", "--out", ws("m")});
  REQUIRE(rot.code == 0);
  for (const char* d : {"target_A", "target_B", "target_C"}) CHECK(fs::exists(ws("m") + "/" + d + "/metrics.json"));

  REQUIRE(with({"experiment"}, {"--setting", "baseline_lstm", "--seeds", "1", "--no_g", "--out", ws("b")}).code == 0);
  CHECK(load_report(ws("b")).provenance.config.find("no_g = true") != std::string::npos);
}

TEST_CASE("data and training failures map to exit codes 2 and 3") {
  const Workspace ws;
  const Result missing = great_cli({"pretrain", "--manifest", ws("m.json"), "--config", ws("tiny.cfg"), "--data",
                                    ws("nowhere"), "--out", ws("p.json")});
  CHECK(missing.code == cli::kExitData);
  CHECK(great_cli({"pretrain", "--manifest", ws("none.json"), "--out", ws("p.json")}).code == cli::kExitData);
  const Result sparse = great_cli({"train", "--manifest", ws("m.json"), "--config", ws("tiny.cfg"), "--aux", "A",
                                   "--sparsity", "0.0001", "--out", ws("t.json")});
  CHECK(sparse.code == cli::kExitData);
  CHECK(sparse.err.find("larger fraction") != std::string::npos);
  const Result ceiling = great_cli({"train", "--manifest", ws("m.json"), "--config", ws("tiny.cfg"), "--aux", "A",
                                    "--rec_ceiling", "1e-300", "--rec_patience", "1", "--out", ws("t.json")});
  CHECK(ceiling.code == cli::kExitTraining);
  CHECK(ceiling.err.find("increase eta") != std::string::npos);
}
