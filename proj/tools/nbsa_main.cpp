#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nbsa/config.hpp"
#include "nbsa/pipeline.hpp"
#include "nbsa/selfcheck.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::string& default_out) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  cmd->add_option("--set", args.sets, "override one key (repeatable), e.g. --set train.epochs=5");
  cmd->add_option("--out", args.out, "output directory")->default_val(default_out);
  cmd->add_option("--seed", args.seed, "override the master seed");
}

nbsa::RunConfig build_config(const CommonArgs& args) {
  nbsa::RunConfig cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& kv : args.sets) cfg.set_kv(kv);
  if (args.seed) cfg.set("seed", std::to_string(*args.seed));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nbsa: blocked non-local self-attention segmentation workbench"};
  app.require_subcommand(1);
  app.footer(nbsa::RunConfig::help_text() +
             "\nexit codes: 0 success, 2 validation error, 3 runtime failure\n");

  CommonArgs gen_args, train_args, eval_args, bench_args, ablate_args, attmap_args, check_args;
  auto* cmd_gen = app.add_subcommand("gen", "generate a phantom dataset into data.dir");
  add_common(cmd_gen, gen_args, "");
  auto* cmd_train = app.add_subcommand("train", "train a model on the generated dataset");
  add_common(cmd_train, train_args, "runs/train");
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(cmd_eval, eval_args, "runs/eval");
  auto* cmd_bench = app.add_subcommand("bench", "count attention flops over a config grid");
  add_common(cmd_bench, bench_args, "runs/bench");
  auto* cmd_ablate = app.add_subcommand("ablate", "train/eval the layers × placement × block × overlap grid");
  add_common(cmd_ablate, ablate_args, "runs/ablate");
  auto* cmd_attmap = app.add_subcommand("attmap", "export an attention map as a PGM image");
  add_common(cmd_attmap, attmap_args, "runs/attmap");
  auto* cmd_check = app.add_subcommand("selfcheck", "run the full invariant suite");
  add_common(cmd_check, check_args, "runs/selfcheck");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) {
      nbsa::RunConfig cfg = build_config(gen_args);
      const std::string out = gen_args.out.empty() ? cfg.get("data.dir") : gen_args.out;
      if (!gen_args.out.empty()) cfg.set("data.dir", gen_args.out);
      cfg.write_lock(out);
      nbsa::pipeline::run_gen(cfg);
      std::cout << "dataset written to " << cfg.get("data.dir") << "\n";
    } else if (cmd_train->parsed()) {
      nbsa::RunConfig cfg = build_config(train_args);
      cfg.write_lock(train_args.out);
      nbsa::TrainResult curve;
      nbsa::pipeline::run_training(cfg, train_args.out, &curve);
      std::cout << "checkpoint and loss curve written to " << train_args.out << "\n";
    } else if (cmd_eval->parsed()) {
      nbsa::RunConfig cfg = build_config(eval_args);
      cfg.write_lock(eval_args.out);
      nbsa::pipeline::run_eval(cfg, eval_args.out);
      std::cout << "metrics written to " << eval_args.out << "\n";
    } else if (cmd_bench->parsed()) {
      nbsa::RunConfig cfg = build_config(bench_args);
      cfg.write_lock(bench_args.out);
      nbsa::pipeline::run_bench(cfg, bench_args.out);
      std::cout << "flop ledger written to " << bench_args.out << "\n";
    } else if (cmd_ablate->parsed()) {
      nbsa::RunConfig cfg = build_config(ablate_args);
      cfg.write_lock(ablate_args.out);
      nbsa::pipeline::run_ablation(cfg, ablate_args.out);
      std::cout << "ablation grid written to " << ablate_args.out << "\n";
    } else if (cmd_attmap->parsed()) {
      nbsa::RunConfig cfg = build_config(attmap_args);
      cfg.write_lock(attmap_args.out);
      nbsa::pipeline::run_attmap(cfg, attmap_args.out);
      std::cout << "attention map written to " << attmap_args.out << "\n";
    } else if (cmd_check->parsed()) {
      nbsa::RunConfig cfg = build_config(check_args);
      cfg.write_lock(check_args.out);
      const auto results = nbsa::selfcheck::run_all(cfg.get("selfcheck.inject"));
      const bool ok = nbsa::selfcheck::report(results, std::cout);
      return ok ? 0 : 3;
    }
  } catch (const nbsa::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
