#include "cli.hpp"

#include <fstream>
#include <future>
#include <sstream>

#include <CLI11.hpp>

#include "phantom/error.hpp"
#include "plot.hpp"

namespace phantom::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

/// Runs `body`, mapping exceptions onto the stable exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

ModelSpec model_for(const CliConfig& cfg, const LabeledDataset& train) {
  return make_preset(cfg.preset, train.sample_shape(), train.num_classes());
}

TrainResult train_one(const CliConfig& cfg) {
  const DataPair data = load_data(cfg);
  return run_training(model_for(cfg, data.train), data.train, data.test, cfg.train);
}

}  // namespace

int cmd_train(CliConfig cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    resolve(cfg);
    cfg.validate();
    const DataPair data = load_data(cfg);
    const ModelSpec spec = model_for(cfg, data.train);
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "config.json", to_json(cfg).dump(2) + "\n");
    const TrainResult result = run_training(spec, data.train, data.test, cfg.train);
    write_run_outputs(cfg.out_dir, result, cfg.train.log_wall_clock);
    out << summary_json(result.summary).dump() << '\n';
    return kExitOk;
  });
}

int cmd_eval(const fs::path& checkpoint, CliConfig cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (checkpoint.empty()) throw ConfigError("--checkpoint", "checkpoint path required");
    if (!fs::is_regular_file(checkpoint)) throw ConfigError("--checkpoint", "'" + checkpoint.string() + "' not found");
    resolve(cfg);
    cfg.validate();
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const DataPair data = load_data(cfg);
    const EvalResult r = evaluate(ckpt, data.test);
    out << nlohmann::json{{"loss", r.loss}, {"accuracy", r.accuracy}}.dump() << '\n';
    return kExitOk;
  });
}

int cmd_ablate_k(CliConfig cfg, const std::vector<std::size_t>& k_list, bool parallel, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    if (k_list.empty()) throw ConfigError("--k-list", "at least one k is required");
    for (auto k : k_list) {
      if (k == 0) throw ConfigError("--k-list", "k must be >= 1");
    }
    resolve(cfg);
    cfg.train.method = Method::phantom;
    cfg.validate();
    const fs::path root = cfg.out_dir;
    fs::create_directories(root);

    struct Row {
      std::size_t k;
      std::string status;
      RunSummary summary;
    };
    auto run_k = [&cfg, &root](std::size_t k) {
      CliConfig run_cfg = cfg;
      run_cfg.train.phantom.k = k;
      run_cfg.out_dir = (root / ("k" + std::to_string(k))).string();
      Row row{k, "ok", {}};
      try {
        fs::create_directories(run_cfg.out_dir);
        write_text(fs::path(run_cfg.out_dir) / "config.json", to_json(run_cfg).dump(2) + "\n");
        const TrainResult result = train_one(run_cfg);
        write_run_outputs(run_cfg.out_dir, result, run_cfg.train.log_wall_clock);
        row.summary = result.summary;
      } catch (const std::exception& e) {
        row.status = "error: " + one_line(e.what());
      }
      return row;
    };

    std::vector<Row> rows;
    if (parallel) {
      std::vector<std::future<Row>> futures;
      for (auto k : k_list) futures.push_back(std::async(std::launch::async, run_k, k));
      for (auto& f : futures) rows.push_back(f.get());
    } else {
      for (auto k : k_list) rows.push_back(run_k(k));
    }

    std::ostringstream csv;
    csv << "k,final_acc,mean5_acc,max5_acc,status\n";
    bool failed = false;
    for (const auto& r : rows) {
      failed |= r.status != "ok";
      char buf[128];
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,", r.k, r.summary.final_accuracy,
                    r.summary.mean5_accuracy, r.summary.max5_accuracy);
      csv << buf << r.status << '\n';
      if (r.status != "ok") err << "k=" << r.k << " failed: " << r.status << '\n';
    }
    write_text(root / "ablation.csv", csv.str());
    out << csv.str();
    return failed ? kExitRuntime : kExitOk;
  });
}

int cmd_plot(const std::vector<fs::path>& csv_paths, const std::vector<std::string>& labels, const fs::path& out_dir,
             std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (csv_paths.empty()) throw ConfigError("--metrics", "at least one metrics CSV is required");
    for (const auto& p : plot_runs(csv_paths, labels, out_dir)) out << p.string() << '\n';
    return kExitOk;
  });
}

namespace {

/// Flags shared by train, eval and ablate-k.
struct RunFlags {
  std::string config, preset, method, data, data_dir, out, sign;
  std::uint64_t seed = 0;
  std::size_t k = 0, epochs = 0, batch_size = 0;
  std::int64_t iters = 0;
  double beta_a = 0, beta_b = 0, alpha = 0, lr = 0, rate = 0;
  bool wall_clock = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app) {
    opts["config"] = app->add_option("--config", config, "JSON config with flat dotted keys");
    opts["preset"] = app->add_option("--preset", preset, "Model preset (mlp2, smallcnn)");
    opts["method"] = app->add_option("--method", method, "erm, phantom, naive_phantom, dropout, disturb");
    opts["data"] = app->add_option("--data", data, "fashion, cifar10, two-moons, blobs");
    opts["data-dir"] = app->add_option("--data-dir", data_dir, "Dataset directory (fallback: PHANTOM_DATA_DIR)");
    opts["seed"] = app->add_option("--seed", seed, "Run seed");
    opts["out"] = app->add_option("--out", out, "Output directory");
    opts["k"] = app->add_option("--k", k, "Micro-cluster size including the main instance");
    opts["beta-a"] = app->add_option("--beta-a", beta_a, "Beta distribution a");
    opts["beta-b"] = app->add_option("--beta-b", beta_b, "Beta distribution b");
    opts["sign"] = app->add_option("--sign", sign, "Loss combination sign (plus, minus)");
    opts["alpha"] = app->add_option("--alpha", alpha, "Fixed alpha instead of Beta draws");
    opts["epochs"] = app->add_option("--epochs", epochs, "Training epochs");
    opts["iters"] = app->add_option("--iters", iters, "Training iterations");
    opts["lr"] = app->add_option("--lr", lr, "Initial learning rate");
    opts["batch-size"] = app->add_option("--batch-size", batch_size, "Batch size");
    opts["rate"] = app->add_option("--rate", rate, "Dropout rate or label flip probability");
    opts["wall-clock"] = app->add_flag("--wall-clock", wall_clock, "Record wall time in metrics.csv");
  }

  bool given(const std::string& name) const { return opts.at(name)->count() > 0; }

  CliConfig build() const {
    CliConfig cfg = given("config") ? load_config_file(config) : CliConfig{};
    if (given("preset")) cfg.preset = preset;
    if (given("method")) cfg.train.method = method_from_string(method);
    if (given("data")) cfg.data_kind = data;
    if (given("data-dir")) cfg.data_dir = data_dir;
    if (given("seed")) cfg.train.seed = seed;
    if (given("out")) cfg.out_dir = out;
    if (given("k")) cfg.train.phantom.k = k;
    if (given("beta-a")) cfg.train.phantom.beta_a = beta_a;
    if (given("beta-b")) cfg.train.phantom.beta_b = beta_b;
    if (given("sign")) cfg.train.phantom.sign = combine_sign_from_string(sign);
    if (given("alpha")) cfg.train.phantom.alpha_override = alpha;
    if (given("epochs")) cfg.train.max_epochs = epochs;
    if (given("iters")) cfg.train.max_iters = iters;
    if (given("lr")) cfg.train.lr0 = lr;
    if (given("batch-size")) cfg.train.batch_size = batch_size;
    if (given("rate")) cfg.train.baseline_rate = rate;
    if (wall_clock) cfg.train.log_wall_clock = true;
    return cfg;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Phantom-embedding regularization: train, evaluate, ablate and plot", "phantom"};
  app.require_subcommand(1);

  RunFlags train_flags, eval_flags, ablate_flags;
  auto* train = app.add_subcommand("train", "Train one model");
  train_flags.attach(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_flags.attach(eval);
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (model.ckpt)")->required();

  auto* ablate = app.add_subcommand("ablate-k", "Sweep the micro-cluster size");
  ablate_flags.attach(ablate);
  std::vector<std::size_t> k_list;
  bool parallel = false;
  ablate->add_option("--k-list", k_list, "Cluster sizes, e.g. 1,2,3,4")->delimiter(',')->required();
  ablate->add_flag("--parallel", parallel, "Run the sweep concurrently");

  auto* plot = app.add_subcommand("plot", "Render train/test curves as SVG");
  std::vector<std::string> metrics, labels;
  std::string plot_out;
  plot->add_option("--metrics", metrics, "metrics.csv files")->required();
  plot->add_option("--labels", labels, "Legend label per file (comma-separated)")->delimiter(',');
  plot->add_option("--out", plot_out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    app.exit(e, msg, msg);
    err << msg.str();
    return kExitConfig;
  }

  if (*train) return guarded(err, [&] { return cmd_train(train_flags.build(), out, err); });
  if (*eval) return guarded(err, [&] { return cmd_eval(checkpoint, eval_flags.build(), out, err); });
  if (*ablate) return guarded(err, [&] { return cmd_ablate_k(ablate_flags.build(), k_list, parallel, out, err); });
  std::vector<fs::path> paths(metrics.begin(), metrics.end());
  return cmd_plot(paths, labels, plot_out, out, err);
}

}  // namespace phantom::cli
