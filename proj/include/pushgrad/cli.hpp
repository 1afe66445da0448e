#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pushgrad/influence.hpp"
#include "pushgrad/oracle.hpp"

namespace pushgrad::cli {

// Everything the experiment commands can be told, with defaults matching the
// standard convex study (3 clients, 100+100 instances, edge probabilities
// U[0.4, 0.8], 5000 training steps, M=500 estimator iterations at S=100).
// Keys use dotted section prefixes; see config_schema() for the full list.
struct ExperimentConfig {
  // data.*: synthetic federation shape, or a directory of per-client CSVs
  // (client<k>_train.csv / client<k>_val.csv) written by generate-data.
  int data_clients = 3;
  int data_components = 3;
  double data_alpha = 0.4;
  int data_dim = 5;
  int data_train = 100;
  int data_val = 100;
  std::uint64_t data_seed = 0;
  std::string data_dir;

  // problem.*: which client cost to build and its fixed scalars.
  std::string problem_kind = "logistic";  // logistic | mask
  double lambda_init = 0.1;               // logistic regularizer entries
  double ridge = 1e-3;                    // mask-cost ridge
  double eta = 1.0;

  // graph.*: edge-probability source for the time-varying digraph, or a
  // fixed schedule file.
  std::string graph_kind = "sampled";  // sampled | file
  double graph_rho_lo = 0.4;
  double graph_rho_hi = 0.8;
  std::uint64_t graph_seed = 0;
  std::string graph_file;

  // train.*: inner solver. checkpoint_in short-circuits training by loading
  // previously saved per-client iterates.
  std::string train_solver = "sgp";  // sgp | newton
  int train_steps = 5000;
  double train_rate = 0.1;
  int train_batch = 0;  // 0 = full batch
  std::string train_checkpoint_in;

  // hgp.*: estimator knobs. oracle=true swaps in the exact hyper-gradient.
  int hgp_m = 500;
  int hgp_s = 100;
  int hgp_batch = 0;  // 0 = full batch
  bool hgp_single_sample = false;
  bool hgp_persistent_weights = false;
  bool hgp_oracle = false;

  // sweep.*: grids for sweep-ms. m_grid entries are trace sample points of a
  // single run per (S, batch) cell; batch 0 means full batch.
  std::vector<int> sweep_m_grid = {1,  2,  3,   5,   7,   10,  14,  20,  28,
                                   40, 50, 70, 100, 140, 200, 280, 400, 500};
  std::vector<int> sweep_s_grid = {1, 2, 3, 5, 10, 100};
  std::vector<int> sweep_b_grid = {0};

  // influence.*
  int influence_top_k = 50;

  // bilevel.*: outer Adam on log lambda, starting from lambda0 on every
  // coordinate (deliberately over-regularized so the demo has room to move).
  int bilevel_steps = 5;
  double bilevel_rate = 0.2;
  double bilevel_lambda0 = 1.0;

  // diag.*: mini-batch sampling for the curvature/noise constants.
  int diag_samples = 20;
  int diag_batch = 20;

  // run.*
  std::vector<std::uint64_t> run_seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string run_out = "out";
};

// One settable key: parse-and-assign plus the inverse for config echoes.
struct ConfigKey {
  std::string name;
  std::string description;
  void (*set)(ExperimentConfig&, const std::string&);
  std::string (*get)(const ExperimentConfig&);
};

// All keys in fixed (section-grouped) order.
const std::vector<ConfigKey>& config_schema();

// Assigns one key=value pair; throws std::invalid_argument for unknown keys
// or unparseable values, naming the key.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

// key=value lines applied onto `config`; '#' starts a comment, blank lines
// are skipped.
void parse_config_stream(std::istream& in, ExperimentConfig& config);
ExperimentConfig load_config_file(const std::string& path);

// Checks cross-field invariants (non-empty seed list, known enum values,
// referenced files present, positive sizes). Throws std::invalid_argument.
void validate_config(const ExperimentConfig& config);

// Full round-trippable precision (printf %.17g); used for every CSV number.
std::string full_precision(double value);

// --- commands ------------------------------------------------------------
// Each command validates its config, writes CSVs plus a <command>_meta.txt
// under run.out, and returns its rows for in-process callers. CSV bytes are
// a pure function of the config; wall-clock metadata goes only to the meta
// file.

struct GenerateDataOutcome {
  std::vector<std::string> paths;
};
GenerateDataOutcome cmd_generate_data(const ExperimentConfig& config);

struct TrainRow {
  std::uint64_t seed = 0;
  double residual = 0.0;  // stationarity residual of the final iterate
  std::string checkpoint_path;
  std::string error;  // failure message; residual is NaN when non-empty
};
struct TrainOutcome {
  std::vector<TrainRow> rows;
  std::string summary_path;
};
TrainOutcome cmd_train(const ExperimentConfig& config);

struct SweepRow {
  std::uint64_t seed = 0;
  int s = 0;
  int batch = 0;
  int m = 0;
  double error_l2 = 0.0;
  double error_rel = 0.0;  // error_l2 / ||stacked outer x-gradient at x*||
  std::string error;       // failure message; metrics are NaN when non-empty
};
struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::string csv_path;
};
SweepOutcome cmd_sweep_ms(const ExperimentConfig& config);

struct InfluenceSeedResult {
  std::uint64_t seed = 0;
  influence::InfluenceReport report;
  int retrained = 0;
  std::string csv_path;
  std::string error;  // failure message; the report is empty when non-empty
};
struct InfluenceOutcome {
  std::vector<InfluenceSeedResult> seeds;
  std::string summary_path;
};
InfluenceOutcome cmd_influence(const ExperimentConfig& config);

struct BilevelRow {
  int step = 0;
  double f_total = 0.0;        // sum over clients of the outer cost at x_i
  double val_loss_mean = 0.0;  // f_total / total validation instances
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};
struct BilevelOutcome {
  std::vector<BilevelRow> rows;
  std::string csv_path;
  std::string error;  // inner-solver failure that cut the run short
};
BilevelOutcome cmd_bilevel(const ExperimentConfig& config);

struct DiagnosticsOutcome {
  oracle::BoundDiagnostics diagnostics;
  double eta_alpha_product = 0.0;
  std::string csv_path;
};
DiagnosticsOutcome cmd_diagnostics(const ExperimentConfig& config);

}  // namespace pushgrad::cli
