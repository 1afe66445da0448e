#include <cstdio>
#include <exception>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pushgrad/cli.hpp"

namespace {

using pushgrad::cli::ExperimentConfig;

// Options are collected as raw key=value assignments and applied in command
// line order on top of the config file, so the precedence is defaults, then
// file, then flags.
struct Invocation {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

ExperimentConfig resolve(const Invocation& inv) {
  ExperimentConfig config;
  if (!inv.config_path.empty()) config = pushgrad::cli::load_config_file(inv.config_path);
  for (const auto& [key, value] : inv.overrides) {
    pushgrad::cli::set_config_value(config, key, value);
  }
  return config;
}

void add_config_options(CLI::App* sub, Invocation& inv) {
  sub->add_option("--config", inv.config_path, "key=value configuration file");
  for (const pushgrad::cli::ConfigKey& key : pushgrad::cli::config_schema()) {
    sub->add_option("--" + key.name)
        ->description(key.description)
        ->each([&inv, name = key.name](std::string value) {
          inv.overrides.emplace_back(name, std::move(value));
        });
  }
}

void add_alias_flag(CLI::App* sub, Invocation& inv, const std::string& flag,
                    const std::string& key, const std::string& value,
                    const std::string& description) {
  sub->add_flag(flag)->description(description)->each([&inv, key, value](std::string) {
    inv.overrides.emplace_back(key, value);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyper-gradient estimation for decentralized training over directed graphs"};
  app.require_subcommand(1);

  Invocation inv;
  int exit_code = 0;
  auto guard = [&](auto fn) {
    return [&inv, &exit_code, fn]() {
      try {
        fn(resolve(inv));
      } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        exit_code = 1;
      }
    };
  };

  CLI::App* generate = app.add_subcommand("generate-data", "Write per-client dataset CSVs");
  add_config_options(generate, inv);
  generate->callback(guard([](const ExperimentConfig& config) {
    const auto outcome = pushgrad::cli::cmd_generate_data(config);
    std::printf("wrote %zu dataset files under %s\n", outcome.paths.size(),
                config.run_out.c_str());
  }));

  CLI::App* train =
      app.add_subcommand("train", "Decentralized inner training; writes per-seed checkpoints");
  add_config_options(train, inv);
  add_alias_flag(train, inv, "--exact-inner", "train.solver", "newton",
                 "solve the inner problem exactly instead of training");
  train->callback(guard([](const ExperimentConfig& config) {
    const auto outcome = pushgrad::cli::cmd_train(config);
    for (const auto& row : outcome.rows) {
      if (row.error.empty()) {
        std::printf("seed %llu: stationarity residual %.3e -> %s\n",
                    static_cast<unsigned long long>(row.seed), row.residual,
                    row.checkpoint_path.c_str());
      } else {
        std::printf("seed %llu: failed: %s\n", static_cast<unsigned long long>(row.seed),
                    row.error.c_str());
      }
    }
    std::printf("summary: %s\n", outcome.summary_path.c_str());
  }));

  CLI::App* sweep = app.add_subcommand(
      "sweep-ms", "Estimator error against the exact hyper-gradient over (m, S, batch) grids");
  add_config_options(sweep, inv);
  add_alias_flag(sweep, inv, "--exact-inner", "train.solver", "newton",
                 "solve the inner problem exactly instead of training");
  sweep->callback(guard([](const ExperimentConfig& config) {
    const auto outcome = pushgrad::cli::cmd_sweep_ms(config);
    std::size_t failed = 0;
    for (const auto& row : outcome.rows) {
      if (!row.error.empty()) ++failed;
    }
    std::printf("%zu rows (%zu failed cells) -> %s\n", outcome.rows.size(), failed,
                outcome.csv_path.c_str());
  }));

  CLI::App* influence = app.add_subcommand(
      "influence", "Predict per-instance influence and score against leave-one-out retraining");
  add_config_options(influence, inv);
  add_alias_flag(influence, inv, "--oracle", "hgp.oracle", "true",
                 "use the exact hyper-gradient instead of the gossip estimator");
  add_alias_flag(influence, inv, "--exact-inner", "train.solver", "newton",
                 "solve the inner problem exactly instead of training");
  influence->callback(guard([](const ExperimentConfig& config) {
    const auto outcome = pushgrad::cli::cmd_influence(config);
    for (const auto& res : outcome.seeds) {
      if (res.error.empty()) {
        std::printf("seed %llu: r2=%.4f f1=%.4f (%d retrained)\n",
                    static_cast<unsigned long long>(res.seed), res.report.r2, res.report.f1,
                    res.retrained);
      } else {
        std::printf("seed %llu: failed: %s\n", static_cast<unsigned long long>(res.seed),
                    res.error.c_str());
      }
    }
    std::printf("summary: %s\n", outcome.summary_path.c_str());
  }));

  CLI::App* bilevel = app.add_subcommand(
      "bilevel", "Outer Adam steps on log lambda driven by estimated hyper-gradients");
  add_config_options(bilevel, inv);
  add_alias_flag(bilevel, inv, "--oracle", "hgp.oracle", "true",
                 "use the exact hyper-gradient instead of the gossip estimator");
  add_alias_flag(bilevel, inv, "--exact-inner", "train.solver", "newton",
                 "solve the inner problem exactly instead of training");
  bilevel->callback(guard([](const ExperimentConfig& config) {
    const auto outcome = pushgrad::cli::cmd_bilevel(config);
    for (const auto& row : outcome.rows) {
      std::printf("step %d: F=%.6f (mean val loss %.6f, lambda in [%.4g, %.4g])\n", row.step,
                  row.f_total, row.val_loss_mean, row.lambda_min, row.lambda_max);
    }
    if (!outcome.error.empty()) std::printf("aborted: %s\n", outcome.error.c_str());
    std::printf("trace: %s\n", outcome.csv_path.c_str());
  }));

  CLI::App* diagnostics = app.add_subcommand(
      "diagnostics", "Curvature and mini-batch noise constants of the configured problem");
  add_config_options(diagnostics, inv);
  diagnostics->callback(guard([](const ExperimentConfig& config) {
    const auto outcome = pushgrad::cli::cmd_diagnostics(config);
    const auto& d = outcome.diagnostics;
    std::printf("alpha=%.6g beta=%.6g kappa_x=%.6g kappa_lambda=%.6g mu=%.6g eta*alpha=%.6g\n",
                d.alpha_est, d.beta_est, d.kappa_x_est, d.kappa_lambda_est, d.mu_est,
                outcome.eta_alpha_product);
    std::printf("csv: %s\n", outcome.csv_path.c_str());
  }));

  CLI11_PARSE(app, argc, argv);
  return exit_code;
}
