#include "vadd/cli/app.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "vadd/cli/commands.hpp"
#include "vadd/error.hpp"

namespace vadd::cli {

namespace {

void add_common(CLI::App* cmd, CommandOptions& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--out", o.out, "output directory (relative paths resolve against $VADD_LAB_OUT)");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads for sampling and evaluation")->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Variational autoencoding discrete diffusion on 2-D toy densities"};
  app.require_subcommand(1);
  CommandOptions o;

  auto* gen = app.add_subcommand("gen-data", "generate a discretized toy dataset");
  add_common(gen, o);
  gen->add_option("--dataset", o.dataset, "checkerboard, swissroll or circles");
  gen->add_option("--n", o.n, "number of samples");
  gen->add_option("--board", o.board, "checkerboard cells per side");

  auto* tr = app.add_subcommand("train", "train a VADD or MDLM model");
  add_common(tr, o);
  tr->add_option("--model", o.model, "vadd or mdlm");
  tr->add_option("--data", o.data, "tokens.csv (default: <out>/tokens.csv)");
  tr->add_option("--epochs", o.epochs, "override training.epochs")->check(CLI::PositiveNumber);
  tr->add_option("--resume", o.resume, "checkpoint to continue from");

  auto* sm = app.add_subcommand("sample", "draw samples from a checkpoint");
  add_common(sm, o);
  sm->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  sm->add_option("--steps", o.steps, "number of reverse steps T")->expected(1);
  sm->add_option("--n", o.n, "number of samples");

  auto* ev = app.add_subcommand("eval", "JS divergence and NLL of a checkpoint");
  add_common(ev, o);
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  ev->add_option("--truth", o.truth, "ground-truth tokens.csv")->required();
  ev->add_option("--steps", o.steps, "step counts T to evaluate (repeatable)");
  ev->add_option("--n", o.n, "samples per T");

  auto* orc = app.add_subcommand("oracle", "run the verification suites");
  add_common(orc, o);
  orc->add_option("--scope", o.scope, "posterior, gradcheck, bounds, masking or all");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tr->parsed()) return cmd_train(o);
    if (sm->parsed()) return cmd_sample(o);
    if (ev->parsed()) return cmd_eval(o);
    if (orc->parsed()) return cmd_oracle(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace vadd::cli
