#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "config.hpp"
#include "phantom/error.hpp"
#include "plot.hpp"
#include "support/fixtures.hpp"

using namespace phantom;
using namespace phantom::cli;
using phantom::testing::scratch_dir;

namespace {

struct Invocation {
  int code;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Small two-moons setup shared by the CLI runs.
std::filesystem::path small_config(const std::filesystem::path& dir) {
  const auto path = dir / "small.json";
  std::ofstream(path) << R"({"data.n_per_class": 150, "data.test_n_per_class": 50, "train.batch_size": 32,
                             "train.epochs": 3, "train.seed": 4})";
  return path;
}

}  // namespace

TEST_CASE("train writes all run artifacts") {
  const auto dir = scratch_dir("cli_train");
  const auto r = invoke({"train", "--config", small_config(dir).string(), "--method", "phantom", "--k", "3", "--out",
                         (dir / "run").string()});
  REQUIRE(r.code == kExitOk);
  for (const char* f : {"config.json", "metrics.csv", "summary.json", "model.ckpt"})
    CHECK(std::filesystem::exists(dir / "run" / f));
  const auto summary = nlohmann::json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(summary.at("epochs") == 3);
  CHECK(summary.at("final_acc").get<double>() > 0.5);
  CHECK(nlohmann::json::parse(r.out) == summary);
}

TEST_CASE("metrics.csv is byte-identical across repeated runs") {
  const auto dir = scratch_dir("cli_det");
  const auto cfg = small_config(dir).string();
  REQUIRE(invoke({"train", "--config", cfg, "--method", "phantom", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(invoke({"train", "--config", cfg, "--method", "phantom", "--out", (dir / "b").string()}).code == 0);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt"));
}

TEST_CASE("eval reproduces the final test accuracy") {
  const auto dir = scratch_dir("cli_eval");
  const auto cfg = small_config(dir).string();
  REQUIRE(invoke({"train", "--config", cfg, "--out", (dir / "run").string()}).code == 0);
  const auto r = invoke({"eval", "--config", cfg, "--checkpoint", (dir / "run" / "model.ckpt").string()});
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(nlohmann::json::parse(r.out).at("accuracy") == summary.at("final_acc"));
}

TEST_CASE("a missing data directory is a config error naming the flag") {
  ::unsetenv("PHANTOM_DATA_DIR");
  const auto dir = scratch_dir("cli_nodata");
  const auto r = invoke({"train", "--data", "fashion", "--preset", "smallcnn", "--out", (dir / "run").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--data-dir") != std::string::npos);
  const auto r2 = invoke(
      {"train", "--data", "fashion", "--data-dir", (dir / "nowhere").string(), "--out", (dir / "run").string()});
  CHECK(r2.code == kExitConfig);
}

TEST_CASE("bad configuration values exit with code 2") {
  const auto dir = scratch_dir("cli_badcfg");
  CHECK(invoke({"train", "--method", "mixup"}).code == kExitConfig);
  CHECK(invoke({"train", "--k", "0", "--method", "phantom"}).code == kExitConfig);
  CHECK(invoke({"train", "--sign", "times"}).code == kExitConfig);
  CHECK(invoke({"train", "--no-such-flag"}).code == kExitConfig);
  CHECK(invoke({"bogus"}).code == kExitConfig);

  std::ofstream(dir / "unknown.json") << R"({"train.speed": 3})";
  const auto r = invoke({"train", "--config", (dir / "unknown.json").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("train.speed") != std::string::npos);

  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(invoke({"train", "--config", (dir / "broken.json").string()}).code == kExitConfig);
  CHECK(invoke({"train", "--config", (dir / "absent.json").string()}).code == kExitConfig);
}

TEST_CASE("resolved config round-trips through JSON") {
  CliConfig cfg;
  cfg.train.method = Method::phantom;
  cfg.train.phantom.k = 4;
  cfg.train.phantom.sign = CombineSign::minus;
  cfg.train.phantom.alpha_override = 0.25;
  cfg.train.lr_decay_iters = {10, 20};
  cfg.train.max_epochs = 7;
  cfg.train.baseline_rate = 0.3;
  cfg.data_kind = "blobs";
  cfg.noise = 0.4;
  cfg.out_dir = "somewhere";
  resolve(cfg);
  const auto j = to_json(cfg);
  CliConfig back;
  apply_json(back, j);
  resolve(back);
  CHECK(to_json(back) == j);
}

TEST_CASE("ablate-k writes one row per k") {
  const auto dir = scratch_dir("cli_ablate");
  const auto r = invoke({"ablate-k", "--config", small_config(dir).string(), "--k-list", "1,2,3,4", "--parallel",
                         "--out", (dir / "abl").string()});
  REQUIRE(r.code == kExitOk);
  const std::string csv = slurp(dir / "abl" / "ablation.csv");
  CHECK(csv.rfind("k,final_acc,mean5_acc,max5_acc,status\n", 0) == 0);
  CHECK(count_of(csv, "\n") == 5);
  for (int k = 1; k <= 4; ++k) CHECK(std::filesystem::exists(dir / "abl" / ("k" + std::to_string(k)) / "metrics.csv"));
}

TEST_CASE("ablate-k at k = 1 matches ERM under the same seed") {
  const auto dir = scratch_dir("cli_ablate_erm");
  const auto cfg = small_config(dir).string();
  REQUIRE(invoke({"ablate-k", "--config", cfg, "--k-list", "1", "--out", (dir / "abl").string()}).code == 0);
  REQUIRE(invoke({"train", "--config", cfg, "--method", "erm", "--out", (dir / "erm").string()}).code == 0);
  const auto a = nlohmann::json::parse(slurp(dir / "abl" / "k1" / "summary.json"));
  const auto e = nlohmann::json::parse(slurp(dir / "erm" / "summary.json"));
  CHECK(a.at("final_acc") == e.at("final_acc"));
  CHECK(a.at("mean5_acc") == e.at("mean5_acc"));
  CHECK(a.at("max5_acc") == e.at("max5_acc"));
}

TEST_CASE("ablate-k with an empty list is a usage error") {
  CHECK(invoke({"ablate-k", "--k-list", ""}).code == kExitConfig);
  CHECK(invoke({"ablate-k", "--k-list", "1,0"}).code == kExitConfig);
}

TEST_CASE("plot draws one polyline per run in each chart") {
  const auto dir = scratch_dir("cli_plot");
  const auto cfg = small_config(dir).string();
  REQUIRE(invoke({"train", "--config", cfg, "--out", (dir / "erm").string()}).code == 0);
  REQUIRE(invoke({"train", "--config", cfg, "--method", "phantom", "--out", (dir / "ph").string()}).code == 0);
  const std::vector<std::string> args{"plot",   "--metrics", (dir / "erm" / "metrics.csv").string(),
                                      (dir / "ph" / "metrics.csv").string(), "--labels", "erm,phantom", "--out",
                                      (dir / "plots").string()};
  REQUIRE(invoke(args).code == 0);
  std::vector<std::string> first;
  for (const char* name : {"train_loss.svg", "test_loss.svg", "test_acc.svg"}) {
    const std::string svg = slurp(dir / "plots" / name);
    CHECK(count_of(svg, "<polyline") == 2);
    CHECK(svg.find("phantom") != std::string::npos);
    first.push_back(svg);
  }
  REQUIRE(invoke(args).code == 0);
  CHECK(slurp(dir / "plots" / "train_loss.svg") == first[0]);
  CHECK(slurp(dir / "plots" / "test_acc.svg") == first[2]);
}

TEST_CASE("a header-only metrics file plots axes without lines") {
  const auto dir = scratch_dir("cli_plot_empty");
  std::ofstream(dir / "m.csv")
      << "epoch,iteration,train_loss,main_loss,phantom_loss,test_loss,test_acc,lr,alpha_mean,wall_seconds\n";
  REQUIRE(invoke({"plot", "--metrics", (dir / "m.csv").string(), "--out", (dir / "plots").string()}).code == 0);
  const std::string svg = slurp(dir / "plots" / "test_acc.svg");
  CHECK(count_of(svg, "<polyline") == 0);
  CHECK(count_of(svg, "<line") >= 2);
}

TEST_CASE("plot rejects a metrics file with the wrong schema") {
  const auto dir = scratch_dir("cli_plot_bad");
  std::ofstream(dir / "m.csv") << "epoch,iteration,train_loss,test_loss,accuracy\n1,10,0.5,0.4,0.9\n";
  const auto r = invoke({"plot", "--metrics", (dir / "m.csv").string(), "--out", (dir / "plots").string()});
  CHECK(r.code == kExitConfig);
  CHECK((r.err.find("main_loss") != std::string::npos || r.err.find("accuracy") != std::string::npos));
  CHECK_THROWS_AS(read_metrics_csv(dir / "m.csv"), ConfigError);
}
