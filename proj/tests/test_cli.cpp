#include <doctest.h>

#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "cumix/data.hpp"
#include "cumix/model.hpp"
#include "support.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cumix");
  std::ostringstream out, err;
  const int code = cumix::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// A small dataset shared by the tests in this file.
const fs::path& dataset() {
  static testing::TempDir dir;
  static const fs::path path = [] {
    const fs::path p = dir / "data";
    const auto r = cli({"synth", "--out", p.string(), "--set", "samples_per_class_per_domain=10"});
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

std::vector<std::string> quick_train(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"train", "--data", dataset().string(), "--out", out.string(),
                                "--preset", "synthetic", "--set", "optim.epochs=4",
                                "--set", "model.hidden_dims=[8]", "--deterministic"};
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

json read_json(const fs::path& p) { return json::parse(testing::read_text(p)); }

}  // namespace

TEST_CASE("help exits 0 and documents every flag") {
  testing::TempDir dir;
  const auto before = std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator{});
  auto r = cli({"--help"});
  CHECK(r.code == 0);
  for (const char* sub : {"train", "eval", "synth", "ablate", "presets"}) {
    CHECK(r.out.find(sub) != std::string::npos);
  }
  r = cli({"train", "--help"});
  CHECK(r.code == 0);
  for (const char* flag : {"--config", "--data", "--out", "--seed", "--mode", "--set", "--preset", "--deterministic"}) {
    CHECK(r.out.find(flag) != std::string::npos);
  }
  r = cli({"eval", "--help"});
  for (const char* flag : {"--model", "--data", "--classes", "--domains", "--out"}) {
    CHECK(r.out.find(flag) != std::string::npos);
  }
  r = cli({"synth", "--help"});
  for (const char* flag : {"--config", "--out", "--seed", "--force"}) CHECK(r.out.find(flag) != std::string::npos);
  r = cli({"ablate", "--help"});
  CHECK(r.out.find("--seeds") != std::string::npos);
  CHECK(std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator{}) == before);
}

TEST_CASE("train argument errors") {
  testing::TempDir dir;
  auto r = cli({"train", "--out", (dir / "o").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("--data") != std::string::npos);

  r = cli({"train", "--data", dataset().string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("--out") != std::string::npos);

  r = cli({"train", "--data", (dir / "missing").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("missing") != std::string::npos);

  r = cli(quick_train(dir / "o", {"--set", "optim.learning_rate=0.1"}));
  CHECK(r.code == 2);
  CHECK(r.err.find("optim.learning_rate") != std::string::npos);

  r = cli(quick_train(dir / "o", {"--mode", "manifold"}));
  CHECK(r.code == 2);

  r = cli(quick_train(dir / "o", {"--set", "optim.momentum=1.5"}));
  CHECK(r.code == 2);
  CHECK(r.err.find("momentum") != std::string::npos);

  r = cli(quick_train(dir / "o", {"--preset", "nope"}));
  CHECK(r.code == 2);

  r = cli({"train", "--bogus"});
  CHECK(r.code == 2);

  testing::write_text(dir / "bad.json", "{\"optim\": {\"lr\": 0.1}, \"extra\": 1}");
  r = cli(quick_train(dir / "o", {"--config", (dir / "bad.json").string()}));
  CHECK(r.code == 2);
  CHECK(r.err.find("extra") != std::string::npos);
}

TEST_CASE("train writes checkpoint, report and epoch table") {
  testing::TempDir dir;
  const auto r = cli(quick_train(dir / "run"));
  REQUIRE(r.code == 0);
  for (const char* f : {"model.cmxm", "model.meta.json", "report.json", "epochs.csv"}) {
    CHECK(fs::exists(dir / "run" / f));
  }
  const std::string csv = testing::read_text(dir / "run" / "epochs.csv");
  CHECK(csv.rfind("epoch,loss_agg,loss_mix_img,loss_mix_feat,total,lr,alpha,beta", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const json report = read_json(dir / "run" / "report.json");
  CHECK(report["mode"] == "cumix");
  CHECK(report["epochs"].size() == 4);
  CHECK(report["evaluations"][0]["name"] == "unseen@test");
  CHECK_FALSE(report.contains("timestamp"));
  const auto model = cumix::load_checkpoint(dir / "run" / "model.cmxm");
  CHECK(model.config.hidden_dims == std::vector<std::size_t>{8});
}

TEST_CASE("train is byte-for-byte deterministic") {
  testing::TempDir dir;
  REQUIRE(cli(quick_train(dir / "a")).code == 0);
  REQUIRE(cli(quick_train(dir / "b")).code == 0);
  CHECK(testing::read_text(dir / "a" / "report.json") == testing::read_text(dir / "b" / "report.json"));
  CHECK(testing::read_text(dir / "a" / "model.cmxm") == testing::read_text(dir / "b" / "model.cmxm"));
  auto args = quick_train(dir / "nondet");
  args.pop_back();  // drop --deterministic
  REQUIRE(cli(args).code == 0);
  const json nd = read_json(dir / "nondet" / "report.json");
  CHECK(nd.contains("timestamp"));
  CHECK(nd.contains("wall_clock_seconds"));
}

TEST_CASE("zero mixing weights reproduce AGG") {
  testing::TempDir dir;
  REQUIRE(cli(quick_train(dir / "agg", {"--mode", "agg"})).code == 0);
  REQUIRE(cli(quick_train(dir / "cu", {"--mode", "cumix", "--set", "loss.eta_img=0", "--set",
                                       "loss.eta_feat=0"}))
              .code == 0);
  const json a = read_json(dir / "agg" / "report.json");
  const json c = read_json(dir / "cu" / "report.json");
  CHECK(a["evaluations"] == c["evaluations"]);
  for (std::size_t e = 0; e < a["epochs"].size(); ++e) {
    CHECK(std::abs(a["epochs"][e]["loss_agg"].get<double>() - c["epochs"][e]["loss_agg"].get<double>()) <= 1e-9);
  }
}

TEST_CASE("config precedence: preset < file < --set < flags") {
  testing::TempDir dir;
  testing::write_text(dir / "cfg.json", R"({"seed": 5, "optim": {"lr": 0.02, "epochs": 3}, "batch_size": 40,
                                           "data": "../x"})");
  fs::create_directories(dir / "x");
  const auto r = cli({"train", "--config", (dir / "cfg.json").string(), "--data", dataset().string(),
                      "--out", (dir / "o").string(), "--preset", "synthetic", "--set", "optim.lr=0.03",
                      "--seed", "9", "--deterministic"});
  REQUIRE(r.code == 0);
  const json cfg = read_json(dir / "o" / "report.json")["config"];
  CHECK(cfg["optim"]["lr"] == 0.03);
  CHECK(cfg["optim"]["epochs"] == 3);
  CHECK(cfg["batch_size"] == 40);
  CHECK(cfg["seed"] == 9);
  CHECK(cfg["mix"]["warmup_epochs"] == 5);  // from the preset
}

TEST_CASE("config file may name the dataset relative to itself") {
  testing::TempDir dir;
  fs::create_directories(dir / "cfgs");
  const std::string rel = fs::relative(dataset(), dir / "cfgs").string();
  testing::write_text(dir / "cfgs" / "run.json",
                      json{{"data", rel}, {"optim", {{"epochs", 2}}}, {"mode", "agg"}}.dump());
  const auto r = cli({"train", "--config", (dir / "cfgs" / "run.json").string(), "--out",
                      (dir / "o").string(), "--deterministic"});
  CHECK(r.code == 0);
  CHECK(read_json(dir / "o" / "report.json")["mode"] == "agg");
}

TEST_CASE("eval") {
  testing::TempDir dir;
  REQUIRE(cli(quick_train(dir / "run")).code == 0);
  const std::string model = (dir / "run" / "model.cmxm").string();

  SUBCASE("default split matches the training report") {
    const auto r = cli({"eval", "--model", model, "--data", dataset().string(), "--out",
                        (dir / "eval.json").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("per-class") != std::string::npos);
    const json e = read_json(dir / "eval.json");
    const json trained = read_json(dir / "run" / "report.json")["evaluations"][0];
    CHECK(e["per_class_accuracy"] == trained["per_class_accuracy"]);
    CHECK(e["top1"] == trained["top1"]);
    CHECK(e["per_class"].size() == 4);
  }
  SUBCASE("explicit classes and domains") {
    const auto r = cli({"eval", "--model", model, "--data", dataset().string(), "--classes", "seen",
                        "--domains", "train", "--out", (dir / "seen.json").string()});
    REQUIRE(r.code == 0);
    const json e = read_json(dir / "seen.json");
    CHECK(e["name"] == "seen@train");
    CHECK(e["num_samples"] == 8 * 3 * 10);
    CHECK(e["per_class_accuracy"].get<double>() >= 0.0);
    CHECK(e["per_class_accuracy"].get<double>() <= 1.0);
  }
  SUBCASE("dimension mismatch") {
    REQUIRE(cli({"synth", "--out", (dir / "wide").string(), "--set", "input_dim=32", "--set",
                 "samples_per_class_per_domain=4"})
                .code == 0);
    const auto r = cli({"eval", "--model", model, "--data", (dir / "wide").string()});
    CHECK(r.code == 2);
  }
  SUBCASE("bad class set name") {
    CHECK(cli({"eval", "--model", model, "--data", dataset().string(), "--classes", "all"}).code == 2);
  }
  SUBCASE("missing checkpoint") {
    CHECK(cli({"eval", "--model", (dir / "none.cmxm").string(), "--data", dataset().string()}).code == 3);
  }
}

TEST_CASE("synth") {
  testing::TempDir dir;
  const std::vector<std::string> small{"--set", "samples_per_class_per_domain=5"};
  auto run = [&](const std::string& name, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"synth", "--out", (dir / name).string()};
    args.insert(args.end(), small.begin(), small.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  REQUIRE(run("a").code == 0);
  REQUIRE(run("b").code == 0);
  CHECK(testing::read_text(dir / "a" / "features.bin") == testing::read_text(dir / "b" / "features.bin"));
  CHECK_NOTHROW(cumix::load_bundle(dir / "a"));
  CHECK(fs::exists(dir / "a" / "synth_config.json"));

  REQUIRE(run("c", {"--seed", "3"}).code == 0);
  CHECK(testing::read_text(dir / "a" / "features.bin") != testing::read_text(dir / "c" / "features.bin"));

  const auto again = run("a");
  CHECK(again.code == 1);
  CHECK(again.err.find("force") != std::string::npos);
  CHECK(run("a", {"--force"}).code == 0);

  CHECK(run("d", {"--set", "n_seen_classes=0"}).code == 2);
  CHECK(run("d", {"--set", "colour=3"}).code == 2);

  testing::write_text(dir / "s.json", R"({"seed": 3, "samples_per_class_per_domain": 5})");
  REQUIRE(cli({"synth", "--config", (dir / "s.json").string(), "--out", (dir / "e").string()}).code == 0);
  CHECK(testing::read_text(dir / "c" / "features.bin") == testing::read_text(dir / "e" / "features.bin"));
}

TEST_CASE("ablate runs the full mode grid on shared batches") {
  testing::TempDir dir;
  const auto r = cli({"ablate", "--data", dataset().string(), "--out", (dir / "abl").string(),
                      "--preset", "synthetic", "--set", "optim.epochs=2", "--set",
                      "model.hidden_dims=[8]", "--seeds", "1", "--deterministic"});
  REQUIRE(r.code == 0);
  std::istringstream table(testing::read_text(dir / "abl" / "ablation.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line.find("mode") == 0);
  CHECK(line.find("batch_hash") != std::string::npos);
  std::vector<std::string> rows;
  std::set<std::string> hashes;
  while (std::getline(table, line)) {
    if (line.empty()) continue;
    rows.push_back(line.substr(0, line.find(',')));
    hashes.insert(line.substr(line.rfind(',') + 1));
  }
  CHECK(rows == std::vector<std::string>{"agg", "mixup", "cumix_input_only", "cumix_feature_only",
                                         "cumix_no_curriculum", "cumix"});
  CHECK(hashes.size() == 1);
  CHECK(fs::exists(dir / "abl" / "ablation.json"));
}

TEST_CASE("presets") {
  auto r = cli({"presets"});
  CHECK(r.code == 0);
  for (const char* p : {"cub", "flo", "awa", "sun", "pacs", "domainnet", "synthetic"}) {
    CHECK(r.out.find(p) != std::string::npos);
  }
  r = cli({"presets", "cub"});
  REQUIRE(r.code == 0);
  const json cub = json::parse(r.out);
  CHECK(cub["optim"]["epochs"] == 90);
  CHECK(cub["mix"]["beta_max"] == 0.8);
  CHECK(cub["mix"]["warmup_epochs"] == 30);
  CHECK(cub["loss"]["eta_img"] == 10.0);
  CHECK(cub["loss"]["eta_feat"] == 10.0);
  CHECK(cub["optim"]["lr"] == 0.1);
  CHECK(cub["model"]["hidden_dims"].empty());
  CHECK(cli({"presets", "imagenet"}).code == 2);
}
