#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "egocast/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string train_data;
  std::string test_data;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int iterations = -1;
  bool paper_arch = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool seed_required) {
  cmd->add_option("-c,--config", args.config_path, "JSON run config (flags override it)");
  cmd->add_option("-o,--out", args.out_dir, "run directory for outputs");
  cmd->add_option("--data-train", args.train_data, "training sequences (JSONL)");
  cmd->add_option("--data-test", args.test_data, "evaluation sequences (JSONL)");
  auto* seed_opt =
      cmd->add_option("--seed", args.seed, "run seed (pins all derived randomness)");
  if (seed_required) seed_opt->required();
  seed_opt->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--iterations", args.iterations, "training iterations for both modules");
  cmd->add_flag("--paper-arch", args.paper_arch,
                "use the full-scale architecture (d=256, L=3, h=8)");
}

egocast::RunConfig resolve_config(const CommonArgs& args) {
  egocast::RunConfig cfg;
  if (!args.config_path.empty()) cfg = egocast::load_run_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.train_data.empty()) cfg.train_data = args.train_data;
  if (!args.test_data.empty()) cfg.test_data = args.test_data;
  if (args.iterations >= 0) {
    cfg.estimator.iterations = args.iterations;
    cfg.forecaster.iterations = args.iterations;
  }
  if (args.paper_arch) egocast::apply_paper_arch(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EgoCast-style pose estimation and forecasting pipeline"};
  app.require_subcommand(1);

  CommonArgs generate_args, train_current_args, train_forecast_args, eval_args, ablate_window_args,
      ablate_visual_args;

  auto* generate = app.add_subcommand("generate", "emit a synthetic train/test dataset");
  add_common(generate, generate_args, /*seed_required=*/false);
  double duration_s = -1;
  int per_archetype = -1;
  generate->add_option("--duration", duration_s, "seconds per sequence");
  generate->add_option("--per-archetype", per_archetype, "sequences per archetype per split");

  auto* train_current = app.add_subcommand("train-current", "train the current-frame module");
  add_common(train_current, train_current_args, /*seed_required=*/true);
  std::string provider_kind;
  train_current->add_option("--provider", provider_kind, "visual provider: null | informative");

  auto* train_forecast = app.add_subcommand("train-forecast", "train the forecasting module");
  add_common(train_forecast, train_forecast_args, /*seed_required=*/true);
  std::string forecast_provider_kind;
  train_forecast->add_option("--provider", forecast_provider_kind,
                             "visual provider: null | informative");

  auto* eval = app.add_subcommand("eval", "evaluate forecasting over the horizon grid");
  add_common(eval, eval_args, /*seed_required=*/false);
  egocast::EvalCommandOptions eval_options;
  eval->add_flag("--oracle", eval_options.oracle,
                 "align predicted trajectories with ground-truth roots");
  eval->add_option("--predictor", eval_options.predictor, "model | echo-gt | gt-drift");
  eval->add_option("--threads", eval_options.threads, "evaluation fan-out (default EGOCAST_THREADS)");
  eval->add_option("--estimator-ckpt", eval_options.estimator_ckpt,
                   "checkpoint to evaluate (default <out>/estimator.ckpt)");
  eval->add_option("--forecaster-ckpt", eval_options.forecaster_ckpt,
                   "checkpoint to evaluate (default <out>/forecaster.ckpt)");

  auto* ablate_window = app.add_subcommand("ablate-window", "window-size grid for both modules");
  add_common(ablate_window, ablate_window_args, /*seed_required=*/true);
  std::vector<int> window_sizes{5, 10, 20, 40};
  ablate_window->add_option("--k", window_sizes, "window sizes to sweep");

  auto* ablate_visual = app.add_subcommand("ablate-visual",
                                           "informative vs null provider comparison");
  add_common(ablate_visual, ablate_visual_args, /*seed_required=*/true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      egocast::RunConfig cfg = resolve_config(generate_args);
      if (duration_s > 0) cfg.generator.duration_s = duration_s;
      if (per_archetype > 0) cfg.generator.sequences_per_archetype = per_archetype;
      egocast::cmd_generate(cfg);
    } else if (train_current->parsed()) {
      egocast::RunConfig cfg = resolve_config(train_current_args);
      if (!provider_kind.empty()) cfg.provider.kind = provider_kind;
      egocast::cmd_train_current(cfg);
    } else if (train_forecast->parsed()) {
      egocast::RunConfig cfg = resolve_config(train_forecast_args);
      if (!forecast_provider_kind.empty()) cfg.provider.kind = forecast_provider_kind;
      egocast::cmd_train_forecast(cfg);
    } else if (eval->parsed()) {
      egocast::cmd_eval(resolve_config(eval_args), eval_options);
    } else if (ablate_window->parsed()) {
      egocast::cmd_ablate_window(resolve_config(ablate_window_args), window_sizes);
    } else if (ablate_visual->parsed()) {
      egocast::cmd_ablate_visual(resolve_config(ablate_visual_args));
    }
  } catch (const egocast::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
