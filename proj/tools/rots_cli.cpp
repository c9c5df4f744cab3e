#include <iostream>

#include "CLI11.hpp"
#include "rots/cli.hpp"

using namespace rots;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "JSON experiment config");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "run a single seed instead of the config's seed list");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--threads", c.threads, "worker threads for evaluation");
}

cli::ExperimentConfig load(const Common& c) {
  auto cfg = c.config.empty() ? cli::ExperimentConfig::parse(cli::json::object()) : cli::ExperimentConfig::load(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  if (c.out) cfg.set_out(*c.out);
  if (c.threads) cfg.set_threads(*c.threads);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RO-TS robust training for time-series classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::kVersion));

  Common train_opts, eval_opts, bench_opts;
  auto* train = app.add_subcommand("train", "train one model per seed");
  add_common(train, train_opts, true);

  auto* eval = app.add_subcommand("eval", "robust-accuracy tables for trained checkpoints");
  add_common(eval, eval_opts, true);
  std::optional<std::string> checkpoint;
  eval->add_option("--checkpoint", checkpoint, "evaluate this checkpoint instead of <out>/seed_<n>/checkpoint.txt");

  auto* distance = app.add_subcommand("distance", "DTW and GAK distances between two series files");
  std::string file_a, file_b, norm = "l2";
  cli::DistanceOptions dopt;
  distance->add_option("file_a", file_a, "first series (one channel per line)")->required();
  distance->add_option("file_b", file_b, "second series")->required();
  distance->add_option("--nu", dopt.nu, "GAK bandwidth")->capture_default_str();
  distance->add_option("--p", norm, "pointwise norm: 1, 2, inf (or l1, l2, linf)")->capture_default_str();
  distance->add_option("--band", dopt.band, "Sakoe-Chiba band width (none by default)");
  auto* prop1_on = distance->add_flag("--prop1", "require the Proposition-1 columns");
  auto* prop1_off = distance->add_flag("--no-prop1", "skip the Proposition-1 columns");
  prop1_on->excludes(prop1_off);

  auto* bench = app.add_subcommand("bench-pl", "synthetic compositional min-max benchmark");
  add_common(bench, bench_opts, false);

  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient checks");
  std::vector<std::string> scopes;
  std::uint64_t grad_seed = 0;
  std::size_t trials = 50;
  grad->add_option("scope", scopes, "dpi, gak, net, rots (all when omitted)");
  grad->add_option("--seed", grad_seed, "random instance seed")->capture_default_str();
  grad->add_option("--trials", trials, "instances per scope")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cli::cmd_train(load(train_opts));
    if (*eval) return cli::cmd_eval(load(eval_opts), checkpoint);
    if (*bench) return cli::cmd_bench_pl(load(bench_opts));
    if (*grad) {
      if (scopes.empty()) scopes = cli::grad_check_scopes();
      if (trials < 1) throw Error(ErrorKind::validation, "--trials must be >= 1");
      return cli::cmd_grad_check(scopes, grad_seed, std::cout, trials);
    }
    if (*distance) {
      dopt.p = cli::parse_norm_arg(norm);
      if (*prop1_on) dopt.prop1 = true;
      if (*prop1_off) dopt.prop1 = false;
      std::cout << cli::distance_csv(cli::read_series(file_a), cli::read_series(file_b), dopt);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "rots: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "rots: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
