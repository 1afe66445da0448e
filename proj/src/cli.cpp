#include "pushgrad/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "pushgrad/consensus.hpp"
#include "pushgrad/hgp.hpp"
#include "pushgrad/innersolve.hpp"
#include "pushgrad/netgraph.hpp"
#include "pushgrad/objective.hpp"
#include "pushgrad/parallel.hpp"
#include "pushgrad/rng.hpp"
#include "pushgrad/synthdata.hpp"

namespace fs = std::filesystem;

namespace pushgrad::cli {
namespace {

// --- value parsing -------------------------------------------------------

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw std::invalid_argument("config key " + key + ": expected " + expected + ", got '" + value +
                              "'");
}

long long to_ll(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (value.empty() || used != value.size()) bad_value(key, value, "an integer");
  return out;
}

int to_int(const std::string& key, const std::string& value) {
  return static_cast<int>(to_ll(key, value));
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (value.empty() || used != value.size()) bad_value(key, value, "an unsigned integer");
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (value.empty() || used != value.size()) bad_value(key, value, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string> split_commas(const std::string& key, const std::string& value) {
  std::vector<std::string> parts;
  std::string token;
  std::istringstream in(value);
  while (std::getline(in, token, ',')) {
    if (token.empty()) bad_value(key, value, "a comma-separated list");
    parts.push_back(token);
  }
  if (parts.empty()) bad_value(key, value, "a comma-separated list");
  return parts;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const std::string& part : split_commas(key, value)) out.push_back(to_int(key, part));
  return out;
}

std::vector<std::uint64_t> to_u64_list(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> out;
  for (const std::string& part : split_commas(key, value)) out.push_back(to_u64(key, part));
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  // clang-format off
  static const std::vector<ConfigKey> schema = {
      {"data.clients", "number of clients",
       [](ExperimentConfig& c, const std::string& v) { c.data_clients = to_int("data.clients", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.data_clients); }},
      {"data.components", "latent mixture components in the synthetic generator",
       [](ExperimentConfig& c, const std::string& v) { c.data_components = to_int("data.components", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.data_components); }},
      {"data.alpha", "Dirichlet concentration of the client mixtures",
       [](ExperimentConfig& c, const std::string& v) { c.data_alpha = to_double("data.alpha", v); },
       [](const ExperimentConfig& c) { return full_precision(c.data_alpha); }},
      {"data.dim", "input dimension",
       [](ExperimentConfig& c, const std::string& v) { c.data_dim = to_int("data.dim", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.data_dim); }},
      {"data.train", "training instances per client",
       [](ExperimentConfig& c, const std::string& v) { c.data_train = to_int("data.train", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.data_train); }},
      {"data.val", "validation instances per client",
       [](ExperimentConfig& c, const std::string& v) { c.data_val = to_int("data.val", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.data_val); }},
      {"data.seed", "synthetic data seed (fixed-dataset commands)",
       [](ExperimentConfig& c, const std::string& v) { c.data_seed = to_u64("data.seed", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.data_seed); }},
      {"data.dir", "directory of client<k>_train.csv / client<k>_val.csv files (empty = synthesize)",
       [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; },
       [](const ExperimentConfig& c) { return c.data_dir; }},
      {"problem.kind", "client cost: logistic | mask",
       [](ExperimentConfig& c, const std::string& v) { c.problem_kind = v; },
       [](const ExperimentConfig& c) { return c.problem_kind; }},
      {"problem.lambda_init", "regularizer entries for the logistic cost",
       [](ExperimentConfig& c, const std::string& v) { c.lambda_init = to_double("problem.lambda_init", v); },
       [](const ExperimentConfig& c) { return full_precision(c.lambda_init); }},
      {"problem.ridge", "fixed ridge of the mask cost",
       [](ExperimentConfig& c, const std::string& v) { c.ridge = to_double("problem.ridge", v); },
       [](const ExperimentConfig& c) { return full_precision(c.ridge); }},
      {"problem.eta", "fixed-point step size",
       [](ExperimentConfig& c, const std::string& v) { c.eta = to_double("problem.eta", v); },
       [](const ExperimentConfig& c) { return full_precision(c.eta); }},
      {"graph.kind", "schedule source: sampled | file",
       [](ExperimentConfig& c, const std::string& v) { c.graph_kind = v; },
       [](const ExperimentConfig& c) { return c.graph_kind; }},
      {"graph.rho_lo", "lower bound of the sampled edge probabilities",
       [](ExperimentConfig& c, const std::string& v) { c.graph_rho_lo = to_double("graph.rho_lo", v); },
       [](const ExperimentConfig& c) { return full_precision(c.graph_rho_lo); }},
      {"graph.rho_hi", "upper bound of the sampled edge probabilities",
       [](ExperimentConfig& c, const std::string& v) { c.graph_rho_hi = to_double("graph.rho_hi", v); },
       [](const ExperimentConfig& c) { return full_precision(c.graph_rho_hi); }},
      {"graph.seed", "seed of the edge-probability matrix",
       [](ExperimentConfig& c, const std::string& v) { c.graph_seed = to_u64("graph.seed", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.graph_seed); }},
      {"graph.file", "fixed schedule file (graph.kind = file)",
       [](ExperimentConfig& c, const std::string& v) { c.graph_file = v; },
       [](const ExperimentConfig& c) { return c.graph_file; }},
      {"train.solver", "inner solver: sgp | newton",
       [](ExperimentConfig& c, const std::string& v) { c.train_solver = v; },
       [](const ExperimentConfig& c) { return c.train_solver; }},
      {"train.steps", "decentralized training steps",
       [](ExperimentConfig& c, const std::string& v) { c.train_steps = to_int("train.steps", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.train_steps); }},
      {"train.rate", "initial learning rate (cut 10x at 80% and 90% of the budget)",
       [](ExperimentConfig& c, const std::string& v) { c.train_rate = to_double("train.rate", v); },
       [](const ExperimentConfig& c) { return full_precision(c.train_rate); }},
      {"train.batch", "training mini-batch size (0 = full batch)",
       [](ExperimentConfig& c, const std::string& v) { c.train_batch = to_int("train.batch", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.train_batch); }},
      {"train.checkpoint_in", "skip training and load per-client iterates from this checkpoint",
       [](ExperimentConfig& c, const std::string& v) { c.train_checkpoint_in = v; },
       [](const ExperimentConfig& c) { return c.train_checkpoint_in; }},
      {"hgp.M", "estimator fixed-point iterations",
       [](ExperimentConfig& c, const std::string& v) { c.hgp_m = to_int("hgp.M", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.hgp_m); }},
      {"hgp.S", "gossip rounds per estimator iteration",
       [](ExperimentConfig& c, const std::string& v) { c.hgp_s = to_int("hgp.S", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.hgp_s); }},
      {"hgp.batch", "estimator mini-batch size (0 = full batch)",
       [](ExperimentConfig& c, const std::string& v) { c.hgp_batch = to_int("hgp.batch", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.hgp_batch); }},
      {"hgp.single_sample", "reuse one mini-batch for both second-order products",
       [](ExperimentConfig& c, const std::string& v) { c.hgp_single_sample = to_bool("hgp.single_sample", v); },
       [](const ExperimentConfig& c) { return c.hgp_single_sample ? std::string("true") : std::string("false"); }},
      {"hgp.persistent_weights", "carry gossip debias weights across estimator iterations",
       [](ExperimentConfig& c, const std::string& v) { c.hgp_persistent_weights = to_bool("hgp.persistent_weights", v); },
       [](const ExperimentConfig& c) { return c.hgp_persistent_weights ? std::string("true") : std::string("false"); }},
      {"hgp.oracle", "replace the gossip estimator with the exact hyper-gradient",
       [](ExperimentConfig& c, const std::string& v) { c.hgp_oracle = to_bool("hgp.oracle", v); },
       [](const ExperimentConfig& c) { return c.hgp_oracle ? std::string("true") : std::string("false"); }},
      {"sweep.m_grid", "iteration counts reported by sweep-ms (comma-separated)",
       [](ExperimentConfig& c, const std::string& v) { c.sweep_m_grid = to_int_list("sweep.m_grid", v); },
       [](const ExperimentConfig& c) { return join_list(c.sweep_m_grid); }},
      {"sweep.s_grid", "gossip-round counts swept by sweep-ms",
       [](ExperimentConfig& c, const std::string& v) { c.sweep_s_grid = to_int_list("sweep.s_grid", v); },
       [](const ExperimentConfig& c) { return join_list(c.sweep_s_grid); }},
      {"sweep.b_grid", "mini-batch sizes swept by sweep-ms (0 = full batch)",
       [](ExperimentConfig& c, const std::string& v) { c.sweep_b_grid = to_int_list("sweep.b_grid", v); },
       [](const ExperimentConfig& c) { return join_list(c.sweep_b_grid); }},
      {"influence.top_k", "instances retrained and scored",
       [](ExperimentConfig& c, const std::string& v) { c.influence_top_k = to_int("influence.top_k", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.influence_top_k); }},
      {"bilevel.steps", "outer Adam steps",
       [](ExperimentConfig& c, const std::string& v) { c.bilevel_steps = to_int("bilevel.steps", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.bilevel_steps); }},
      {"bilevel.rate", "outer Adam learning rate on log lambda",
       [](ExperimentConfig& c, const std::string& v) { c.bilevel_rate = to_double("bilevel.rate", v); },
       [](const ExperimentConfig& c) { return full_precision(c.bilevel_rate); }},
      {"bilevel.lambda0", "initial regularizer entries of the bilevel demo",
       [](ExperimentConfig& c, const std::string& v) { c.bilevel_lambda0 = to_double("bilevel.lambda0", v); },
       [](const ExperimentConfig& c) { return full_precision(c.bilevel_lambda0); }},
      {"diag.samples", "mini-batches sampled per client for the noise constants",
       [](ExperimentConfig& c, const std::string& v) { c.diag_samples = to_int("diag.samples", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.diag_samples); }},
      {"diag.batch", "mini-batch size for the noise constants (0 = full batch)",
       [](ExperimentConfig& c, const std::string& v) { c.diag_batch = to_int("diag.batch", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.diag_batch); }},
      {"run.seeds", "seed list (comma-separated)",
       [](ExperimentConfig& c, const std::string& v) { c.run_seeds = to_u64_list("run.seeds", v); },
       [](const ExperimentConfig& c) { return join_list(c.run_seeds); }},
      {"run.out", "output directory",
       [](ExperimentConfig& c, const std::string& v) { c.run_out = v; },
       [](const ExperimentConfig& c) { return c.run_out; }},
  };
  // clang-format on
  return schema;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const ConfigKey& entry : config_schema()) {
    if (entry.name == key) {
      entry.set(config, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void parse_config_stream(std::istream& in, ExperimentConfig& config) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  ExperimentConfig config;
  parse_config_stream(in, config);
  return config;
}

void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& message) { throw std::invalid_argument("config: " + message); };
  if (c.data_clients < 1) fail("data.clients must be at least 1");
  if (c.data_components < 1) fail("data.components must be at least 1");
  if (c.data_alpha <= 0) fail("data.alpha must be positive");
  if (c.data_dim < 1) fail("data.dim must be at least 1");
  if (c.data_train < 1) fail("data.train must be at least 1");
  if (c.data_val < 1) fail("data.val must be at least 1");
  if (!c.data_dir.empty()) {
    for (int k = 0; k < c.data_clients; ++k) {
      for (const char* split : {"_train.csv", "_val.csv"}) {
        fs::path p = fs::path(c.data_dir) / ("client" + std::to_string(k) + split);
        if (!fs::exists(p)) fail("data.dir: missing " + p.string());
      }
    }
  }
  if (c.problem_kind != "logistic" && c.problem_kind != "mask")
    fail("problem.kind must be logistic or mask");
  if (c.lambda_init <= 0) fail("problem.lambda_init must be positive");
  if (c.ridge <= 0) fail("problem.ridge must be positive");
  if (c.eta <= 0) fail("problem.eta must be positive");
  if (c.graph_kind == "sampled") {
    if (c.graph_rho_lo < 0 || c.graph_rho_hi > 1 || c.graph_rho_lo > c.graph_rho_hi)
      fail("graph.rho_lo/rho_hi must satisfy 0 <= lo <= hi <= 1");
  } else if (c.graph_kind == "file") {
    if (c.graph_file.empty()) fail("graph.file required when graph.kind = file");
    if (!fs::exists(c.graph_file)) fail("graph.file: missing " + c.graph_file);
  } else {
    fail("graph.kind must be sampled or file");
  }
  if (c.train_solver != "sgp" && c.train_solver != "newton")
    fail("train.solver must be sgp or newton");
  if (c.train_steps < 0) fail("train.steps must be non-negative");
  if (c.train_rate <= 0) fail("train.rate must be positive");
  if (c.train_batch < 0) fail("train.batch must be non-negative");
  if (!c.train_checkpoint_in.empty() && !fs::exists(c.train_checkpoint_in))
    fail("train.checkpoint_in: missing " + c.train_checkpoint_in);
  if (c.hgp_m < 0) fail("hgp.M must be non-negative");
  if (c.hgp_s < 1) fail("hgp.S must be at least 1");
  if (c.hgp_batch < 0) fail("hgp.batch must be non-negative");
  if (c.sweep_m_grid.empty() || c.sweep_s_grid.empty() || c.sweep_b_grid.empty())
    fail("sweep grids must be non-empty");
  for (int m : c.sweep_m_grid)
    if (m < 0) fail("sweep.m_grid entries must be non-negative");
  for (int s : c.sweep_s_grid)
    if (s < 1) fail("sweep.s_grid entries must be at least 1");
  for (int b : c.sweep_b_grid)
    if (b < 0) fail("sweep.b_grid entries must be non-negative");
  if (c.influence_top_k < 1) fail("influence.top_k must be at least 1");
  if (c.bilevel_steps < 0) fail("bilevel.steps must be non-negative");
  if (c.bilevel_rate < 0) fail("bilevel.rate must be non-negative");
  if (c.bilevel_lambda0 <= 0) fail("bilevel.lambda0 must be positive");
  if (c.diag_samples < 1) fail("diag.samples must be at least 1");
  if (c.diag_batch < 0) fail("diag.batch must be non-negative");
  if (c.run_seeds.empty()) fail("run.seeds must be non-empty");
  if (c.run_out.empty()) fail("run.out must be non-empty");
}

std::string full_precision(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

// --- shared command plumbing ---------------------------------------------

std::string iso_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path ensure_out_dir(const ExperimentConfig& config) {
  fs::path dir(config.run_out);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Wall-clock info lives here and only here, so the CSVs stay byte-identical
// across reruns of the same config.
void write_meta(const ExperimentConfig& config, const fs::path& dir, const std::string& command) {
  std::ofstream out = open_out(dir / (command + "_meta.txt"));
  out << "command: " << command << "\n";
  out << "timestamp: " << iso_timestamp() << "\n";
  out << "config:\n";
  for (const ConfigKey& key : config_schema()) {
    out << "  " << key.name << " = " << key.get(config) << "\n";
  }
}

// Owning bundle behind the non-owning ClientSet the solvers take.
struct Federation {
  std::vector<synthdata::ClientData> data;
  std::vector<std::unique_ptr<objective::ClientCost>> owned;
  innersolve::ClientSet clients;
  std::vector<std::vector<double>> lambda;
};

std::vector<synthdata::ClientData> load_or_generate_data(const ExperimentConfig& config,
                                                         std::uint64_t data_seed) {
  if (!config.data_dir.empty()) {
    std::vector<synthdata::ClientData> out;
    for (int k = 0; k < config.data_clients; ++k) {
      const fs::path base = fs::path(config.data_dir) / ("client" + std::to_string(k));
      synthdata::ClientData cd;
      cd.train = synthdata::load_dataset_csv(base.string() + "_train.csv");
      cd.validation = synthdata::load_dataset_csv(base.string() + "_val.csv");
      out.push_back(std::move(cd));
    }
    return out;
  }
  synthdata::SyntheticConfig sc;
  sc.n_clients = config.data_clients;
  sc.n_components = config.data_components;
  sc.dirichlet_alpha = config.data_alpha;
  sc.input_dim = config.data_dim;
  sc.train_per_client = config.data_train;
  sc.val_per_client = config.data_val;
  sc.seed = data_seed;
  return synthdata::generate_federation(sc);
}

Federation build_federation(const ExperimentConfig& config, std::uint64_t data_seed,
                            const std::string& kind) {
  Federation fed;
  fed.data = load_or_generate_data(config, data_seed);
  for (const synthdata::ClientData& cd : fed.data) {
    if (kind == "mask") {
      fed.owned.push_back(
          std::make_unique<objective::InstanceMaskCost>(cd.train, cd.validation, config.ridge));
      fed.lambda.emplace_back(fed.owned.back()->lambda_dim(), 1.0);
    } else {
      fed.owned.push_back(
          std::make_unique<objective::RegularizedLogisticCost>(cd.train, cd.validation));
      fed.lambda.emplace_back(fed.owned.back()->lambda_dim(), config.lambda_init);
    }
  }
  for (const auto& cost : fed.owned) fed.clients.push_back(cost.get());
  return fed;
}

std::shared_ptr<const netgraph::ScheduleSource> make_source(const ExperimentConfig& config, int n,
                                                            std::uint64_t stream_seed) {
  if (config.graph_kind == "file") {
    netgraph::GraphSchedule schedule = netgraph::load_schedule_file(config.graph_file);
    if (schedule.n != n) {
      throw std::invalid_argument("graph.file: schedule has " + std::to_string(schedule.n) +
                                  " clients but the problem has " + std::to_string(n));
    }
    return std::make_shared<netgraph::FixedScheduleSource>(std::move(schedule));
  }
  netgraph::EdgeProbabilityMatrix prob = netgraph::EdgeProbabilityMatrix::uniform_offdiag(
      n, config.graph_rho_lo, config.graph_rho_hi, config.graph_seed);
  return std::make_shared<netgraph::SampledScheduleSource>(std::move(prob), stream_seed);
}

// Trains (or loads) the per-client inner iterates. `seed` separates the
// graph and batch streams of independent repetitions; `warm` seeds the
// solver with a previous solution.
BlockVector solve_inner(const innersolve::ClientSet& clients,
                        const std::vector<std::vector<double>>& lambda,
                        const ExperimentConfig& config, std::uint64_t seed,
                        const BlockVector* warm = nullptr) {
  const int n = static_cast<int>(clients.size());
  const int d = clients.front()->x_dim();
  if (!config.train_checkpoint_in.empty()) {
    BlockVector x = innersolve::load_checkpoint_csv(config.train_checkpoint_in);
    if (x.n != n || x.d != d) {
      throw std::invalid_argument("train.checkpoint_in: shape " + std::to_string(x.n) + "x" +
                                  std::to_string(x.d) + " does not match the problem (" +
                                  std::to_string(n) + "x" + std::to_string(d) + ")");
    }
    return x;
  }
  if (config.train_solver == "newton") {
    innersolve::NewtonOptions options;
    if (warm != nullptr) {
      auto block = warm->block(0);
      options.x0.assign(block.begin(), block.end());
    }
    std::vector<double> star = innersolve::newton_consensus_solve(clients, lambda, options);
    BlockVector x(n, d);
    for (int i = 0; i < n; ++i) std::copy(star.begin(), star.end(), x.block(i).begin());
    return x;
  }
  innersolve::FederatedProblem problem;
  problem.clients = clients;
  problem.lambda = lambda;
  problem.eta = config.eta;
  problem.x = (warm != nullptr) ? *warm : BlockVector(n, d);
  problem.averaging = consensus::AveragingOperator::push_sum(
      make_source(config, n, rng::derive(seed, "train-graph")), 1);
  innersolve::SgpOptions options;
  options.steps = config.train_steps;
  options.schedule.initial = config.train_rate;
  options.batch_size = config.train_batch;
  options.seed = rng::derive(seed, "train-batch");
  innersolve::sgp_train(problem, options);
  return std::move(problem.x);
}

// Hyper-gradient estimate at the given iterates: the gossip estimator by
// default, the exact computation when hgp.oracle is set.
std::vector<std::vector<double>> estimate_hypergradient(const Federation& fed,
                                                        const std::vector<std::vector<double>>& lambda,
                                                        const ExperimentConfig& config,
                                                        const BlockVector& x_hat,
                                                        std::uint64_t seed) {
  if (config.hgp_oracle) return oracle::ift_hypergradient(fed.clients, lambda);
  innersolve::FederatedProblem problem;
  problem.clients = fed.clients;
  problem.lambda = lambda;
  problem.eta = config.eta;
  problem.x = x_hat;
  problem.averaging = consensus::AveragingOperator::push_sum(
      make_source(config, static_cast<int>(fed.clients.size()), rng::derive(seed, "hgp-graph")),
      config.hgp_s, config.hgp_persistent_weights);
  hgp::HgpConfig hc;
  hc.iterations = config.hgp_m;
  hc.batch_size = config.hgp_batch;
  hc.single_sample = config.hgp_single_sample;
  hc.seed = rng::derive(seed, "hgp-batch");
  return hgp::hgp_run(problem, hc).v;
}

}  // namespace

// --- generate-data -------------------------------------------------------

GenerateDataOutcome cmd_generate_data(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path dir = ensure_out_dir(config);
  const std::vector<synthdata::ClientData> data = load_or_generate_data(config, config.data_seed);
  GenerateDataOutcome outcome;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const fs::path base = dir / ("client" + std::to_string(k));
    synthdata::save_dataset_csv(base.string() + "_train.csv", data[k].train);
    synthdata::save_dataset_csv(base.string() + "_val.csv", data[k].validation);
    outcome.paths.push_back(base.string() + "_train.csv");
    outcome.paths.push_back(base.string() + "_val.csv");
  }
  write_meta(config, dir, "generate_data");
  return outcome;
}

// --- train ---------------------------------------------------------------

TrainOutcome cmd_train(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path dir = ensure_out_dir(config);
  const Federation fed = build_federation(config, config.data_seed, config.problem_kind);

  const int count = static_cast<int>(config.run_seeds.size());
  std::vector<TrainRow> rows(count);
  parallel::parallel_for(count, [&](int idx) {
    TrainRow& row = rows[idx];
    row.seed = config.run_seeds[idx];
    try {
      BlockVector x = solve_inner(fed.clients, fed.lambda, config, row.seed);
      row.residual = innersolve::stationarity_residual(fed.clients, fed.lambda, x, config.eta);
      const fs::path path = dir / ("checkpoint_seed" + std::to_string(row.seed) + ".csv");
      innersolve::save_checkpoint_csv(path.string(), x);
      row.checkpoint_path = path.string();
    } catch (const std::exception& e) {
      row.residual = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
  });

  const fs::path summary = dir / "train_summary.csv";
  std::ofstream out = open_out(summary);
  out << "# train_summary v1\n";
  out << "seed,residual,checkpoint,error\n";
  for (const TrainRow& row : rows) {
    out << row.seed << ',' << full_precision(row.residual) << ','
        << fs::path(row.checkpoint_path).filename().string() << ',' << row.error << '\n';
  }
  out.close();
  write_meta(config, dir, "train");
  return TrainOutcome{std::move(rows), summary.string()};
}

// --- sweep-ms ------------------------------------------------------------

SweepOutcome cmd_sweep_ms(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path dir = ensure_out_dir(config);
  const Federation fed = build_federation(config, config.data_seed, config.problem_kind);
  const int n = static_cast<int>(fed.clients.size());

  std::vector<int> m_grid = config.sweep_m_grid;
  std::sort(m_grid.begin(), m_grid.end());
  m_grid.erase(std::unique(m_grid.begin(), m_grid.end()), m_grid.end());
  std::vector<int> s_grid = config.sweep_s_grid;
  std::sort(s_grid.begin(), s_grid.end());
  s_grid.erase(std::unique(s_grid.begin(), s_grid.end()), s_grid.end());
  std::vector<int> b_grid = config.sweep_b_grid;
  std::sort(b_grid.begin(), b_grid.end());
  b_grid.erase(std::unique(b_grid.begin(), b_grid.end()), b_grid.end());
  const int m_max = m_grid.back();

  // Errors are measured against the exact hyper-gradient of the fixed
  // dataset; the relative column divides by the stacked outer x-gradient
  // norm at the exact optimum.
  const std::vector<std::vector<double>> reference = oracle::ift_hypergradient(fed.clients, fed.lambda);
  const std::vector<double> x_star = innersolve::newton_consensus_solve(fed.clients, fed.lambda);
  double gx_sumsq = 0.0;
  {
    const int d = fed.clients.front()->x_dim();
    std::vector<double> gx(d);
    for (int i = 0; i < n; ++i) {
      std::vector<double> glam(fed.clients[i]->lambda_dim());
      fed.clients[i]->outer_grads(x_star, fed.lambda[i], gx, glam);
      for (double g : gx) gx_sumsq += g * g;
    }
  }
  const double gx_norm = std::sqrt(gx_sumsq);

  const int seeds = static_cast<int>(config.run_seeds.size());
  const int cells_per_seed = static_cast<int>(s_grid.size() * b_grid.size());
  std::vector<std::vector<SweepRow>> cells(static_cast<std::size_t>(seeds) * cells_per_seed);

  parallel::parallel_for(seeds, [&](int seed_idx) {
    const std::uint64_t seed = config.run_seeds[seed_idx];
    auto cell_rows = [&](int s_idx, int b_idx) -> std::vector<SweepRow>& {
      return cells[static_cast<std::size_t>(seed_idx) * cells_per_seed +
                   static_cast<std::size_t>(s_idx) * b_grid.size() + b_idx];
    };
    auto fail_cell = [&](int s_idx, int b_idx, const std::string& message) {
      SweepRow row;
      row.seed = seed;
      row.s = s_grid[s_idx];
      row.batch = b_grid[b_idx];
      row.m = 0;
      row.error_l2 = std::numeric_limits<double>::quiet_NaN();
      row.error_rel = std::numeric_limits<double>::quiet_NaN();
      row.error = message;
      cell_rows(s_idx, b_idx).push_back(row);
    };

    BlockVector x_hat;
    try {
      x_hat = solve_inner(fed.clients, fed.lambda, config, seed);
    } catch (const std::exception& e) {
      for (std::size_t si = 0; si < s_grid.size(); ++si)
        for (std::size_t bi = 0; bi < b_grid.size(); ++bi)
          fail_cell(static_cast<int>(si), static_cast<int>(bi), e.what());
      return;
    }

    for (std::size_t si = 0; si < s_grid.size(); ++si) {
      for (std::size_t bi = 0; bi < b_grid.size(); ++bi) {
        const int s = s_grid[si];
        const int b = b_grid[bi];
        try {
          innersolve::FederatedProblem problem;
          problem.clients = fed.clients;
          problem.lambda = fed.lambda;
          problem.eta = config.eta;
          problem.x = x_hat;
          problem.averaging = consensus::AveragingOperator::push_sum(
              make_source(config, n,
                          rng::derive(rng::derive(seed, "hgp-graph"),
                                      {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b)})),
              s, config.hgp_persistent_weights);
          hgp::HgpConfig hc;
          hc.iterations = m_max;
          hc.batch_size = b;
          hc.single_sample = config.hgp_single_sample;
          hc.seed = rng::derive(rng::derive(seed, "hgp-batch"),
                                {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b)});
          const hgp::HgpResult result = hgp::hgp_run(problem, hc, &reference);

          // One run per cell: the error at iteration m is read off the trace,
          // stacking the per-client errors.
          std::vector<double> sumsq(static_cast<std::size_t>(m_max) + 1, 0.0);
          for (const hgp::TraceRow& tr : result.trace)
            sumsq[tr.m] += tr.error_l2 * tr.error_l2;
          for (int m : m_grid) {
            SweepRow row;
            row.seed = seed;
            row.s = s;
            row.batch = b;
            row.m = m;
            row.error_l2 = std::sqrt(sumsq[m]);
            row.error_rel = (gx_norm > 0) ? row.error_l2 / gx_norm
                                          : std::numeric_limits<double>::quiet_NaN();
            cell_rows(static_cast<int>(si), static_cast<int>(bi)).push_back(row);
          }
        } catch (const std::exception& e) {
          fail_cell(static_cast<int>(si), static_cast<int>(bi), e.what());
        }
      }
    }
  });

  SweepOutcome outcome;
  for (const std::vector<SweepRow>& cell : cells)
    outcome.rows.insert(outcome.rows.end(), cell.begin(), cell.end());
  std::sort(outcome.rows.begin(), outcome.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.seed, a.s, a.batch, a.m) < std::tie(b.seed, b.s, b.batch, b.m);
  });

  const fs::path csv = dir / "sweep_ms.csv";
  std::ofstream out = open_out(csv);
  out << "# sweep_ms v1\n";
  out << "seed,s,batch,m,error_l2,error_rel,error\n";
  for (const SweepRow& row : outcome.rows) {
    out << row.seed << ',' << row.s << ',' << row.batch << ',' << row.m << ','
        << full_precision(row.error_l2) << ',' << full_precision(row.error_rel) << ',' << row.error
        << '\n';
  }
  out.close();
  write_meta(config, dir, "sweep_ms");
  outcome.csv_path = csv.string();
  return outcome;
}

// --- influence -----------------------------------------------------------

InfluenceOutcome cmd_influence(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path dir = ensure_out_dir(config);

  const int count = static_cast<int>(config.run_seeds.size());
  std::vector<InfluenceSeedResult> results(count);
  parallel::parallel_for(count, [&](int idx) {
    InfluenceSeedResult& res = results[idx];
    res.seed = config.run_seeds[idx];
    try {
      // Each seed is a fresh problem instance: new dataset, new graph and
      // batch streams. The mask cost is required regardless of problem.kind.
      const Federation fed =
          build_federation(config, rng::derive(res.seed, "data"), "mask");
      const BlockVector x_hat = solve_inner(fed.clients, fed.lambda, config, res.seed);
      const std::vector<std::vector<double>> v =
          estimate_hypergradient(fed, fed.lambda, config, x_hat, res.seed);

      std::vector<influence::InfluenceRecord> top =
          influence::select_top_k(influence::predict_influence(v), config.influence_top_k);
      const std::vector<double> x_star = innersolve::newton_consensus_solve(fed.clients, fed.lambda);
      res.retrained = influence::retrain_influence_oracle(fed.clients, fed.lambda, top, x_star);
      res.report = influence::score_report(std::move(top));

      const fs::path path = dir / ("influence_report_seed" + std::to_string(res.seed) + ".csv");
      std::ofstream out = open_out(path);
      out << "# influence_report v1\n";
      out << "client,instance,predicted,actual,retrained\n";
      for (const influence::InfluenceRecord& r : res.report.records) {
        out << r.client << ',' << r.instance << ',' << full_precision(r.predicted) << ','
            << full_precision(r.actual) << ',' << (r.retrained ? 1 : 0) << '\n';
      }
      out << "# summary r2=" << full_precision(res.report.r2)
          << " r2_defined=" << (res.report.r2_defined ? 1 : 0)
          << " f1=" << full_precision(res.report.f1) << " retrained=" << res.retrained << "\n";
      res.csv_path = path.string();
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  });

  const fs::path summary = dir / "influence_summary.csv";
  std::ofstream out = open_out(summary);
  out << "# influence_summary v1\n";
  out << "seed,r2,r2_defined,f1,retrained,error\n";
  for (const InfluenceSeedResult& res : results) {
    if (res.error.empty()) {
      out << res.seed << ',' << full_precision(res.report.r2) << ','
          << (res.report.r2_defined ? 1 : 0) << ',' << full_precision(res.report.f1) << ','
          << res.retrained << ",\n";
    } else {
      out << res.seed << ",nan,0,nan,0," << res.error << '\n';
    }
  }
  out.close();
  write_meta(config, dir, "influence");
  return InfluenceOutcome{std::move(results), summary.string()};
}

// --- bilevel -------------------------------------------------------------

BilevelOutcome cmd_bilevel(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path dir = ensure_out_dir(config);
  const Federation fed = build_federation(config, config.data_seed, "logistic");
  const int n = static_cast<int>(fed.clients.size());
  const std::uint64_t seed = config.run_seeds.front();

  double total_val = 0.0;
  for (const objective::ClientCost* cost : fed.clients)
    total_val += static_cast<double>(cost->validation().size());

  // The outer variable is theta = log(lambda), kept elementwise per client;
  // lambda is always exp(theta) so a zero-rate run leaves it bit-identical.
  std::vector<std::vector<double>> theta(n), lambda(n);
  std::vector<std::vector<double>> adam_m(n), adam_v(n);
  for (int i = 0; i < n; ++i) {
    const int dim = fed.clients[i]->lambda_dim();
    theta[i].assign(dim, std::log(config.bilevel_lambda0));
    lambda[i].resize(dim);
    for (int a = 0; a < dim; ++a) lambda[i][a] = std::exp(theta[i][a]);
    adam_m[i].assign(dim, 0.0);
    adam_v[i].assign(dim, 0.0);
  }

  BilevelOutcome outcome;
  BlockVector x_hat;
  bool have_warm = false;
  for (int step = 0; step <= config.bilevel_steps; ++step) {
    try {
      x_hat = solve_inner(fed.clients, lambda, config,
                          rng::derive(seed, {std::uint64_t{0xb11e}, static_cast<std::uint64_t>(step)}),
                          have_warm ? &x_hat : nullptr);
      have_warm = true;
    } catch (const std::exception& e) {
      outcome.error = "inner solve at outer step " + std::to_string(step) + ": " + e.what();
      break;
    }

    BilevelRow row;
    row.step = step;
    for (int i = 0; i < n; ++i)
      row.f_total += fed.clients[i]->outer_value(x_hat.block(i), lambda[i]);
    row.val_loss_mean = row.f_total / total_val;
    row.lambda_min = std::numeric_limits<double>::infinity();
    row.lambda_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      for (double l : lambda[i]) {
        row.lambda_min = std::min(row.lambda_min, l);
        row.lambda_max = std::max(row.lambda_max, l);
      }
    }
    outcome.rows.push_back(row);
    if (step == config.bilevel_steps) break;

    std::vector<std::vector<double>> v;
    try {
      v = estimate_hypergradient(fed, lambda, config, x_hat,
                                 rng::derive(seed, {std::uint64_t{0xb12e}, static_cast<std::uint64_t>(step)}));
    } catch (const std::exception& e) {
      outcome.error = "hyper-gradient at outer step " + std::to_string(step) + ": " + e.what();
      break;
    }

    // Adam on theta; the chain rule through lambda = exp(theta) multiplies
    // each gradient entry by its lambda.
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double t = static_cast<double>(step + 1);
    for (int i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < theta[i].size(); ++a) {
        const double g = v[i][a] * lambda[i][a];
        adam_m[i][a] = beta1 * adam_m[i][a] + (1 - beta1) * g;
        adam_v[i][a] = beta2 * adam_v[i][a] + (1 - beta2) * g * g;
        const double m_hat = adam_m[i][a] / (1 - std::pow(beta1, t));
        const double v_hat = adam_v[i][a] / (1 - std::pow(beta2, t));
        theta[i][a] -= config.bilevel_rate * m_hat / (std::sqrt(v_hat) + eps);
        lambda[i][a] = std::exp(theta[i][a]);
      }
    }
  }

  const fs::path csv = dir / "bilevel_trace.csv";
  std::ofstream out = open_out(csv);
  out << "# bilevel_trace v1\n";
  out << "step,f_total,val_loss_mean,lambda_min,lambda_max\n";
  for (const BilevelRow& row : outcome.rows) {
    out << row.step << ',' << full_precision(row.f_total) << ','
        << full_precision(row.val_loss_mean) << ',' << full_precision(row.lambda_min) << ','
        << full_precision(row.lambda_max) << '\n';
  }
  if (!outcome.error.empty()) out << "# aborted: " << outcome.error << "\n";
  out.close();
  write_meta(config, dir, "bilevel");
  outcome.csv_path = csv.string();
  return outcome;
}

// --- diagnostics ---------------------------------------------------------

DiagnosticsOutcome cmd_diagnostics(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path dir = ensure_out_dir(config);
  const Federation fed = build_federation(config, config.data_seed, config.problem_kind);

  DiagnosticsOutcome outcome;
  outcome.diagnostics = oracle::estimate_bound_constants(
      fed.clients, fed.lambda, config.diag_samples, config.diag_batch,
      rng::derive(config.run_seeds.front(), "diag"));
  outcome.eta_alpha_product = config.eta * outcome.diagnostics.alpha_est;
  if (outcome.eta_alpha_product >= 1.0) {
    std::fprintf(stderr,
                 "warning: eta * alpha = %s >= 1; the fixed-point step is too large for this "
                 "problem's curvature\n",
                 full_precision(outcome.eta_alpha_product).c_str());
  }

  const fs::path csv = dir / "diagnostics.csv";
  std::ofstream out = open_out(csv);
  out << "# diagnostics v1\n";
  out << "alpha,beta,kappa_x,kappa_lambda,mu,eta_alpha_product\n";
  out << full_precision(outcome.diagnostics.alpha_est) << ','
      << full_precision(outcome.diagnostics.beta_est) << ','
      << full_precision(outcome.diagnostics.kappa_x_est) << ','
      << full_precision(outcome.diagnostics.kappa_lambda_est) << ','
      << full_precision(outcome.diagnostics.mu_est) << ','
      << full_precision(outcome.eta_alpha_product) << '\n';
  out.close();
  write_meta(config, dir, "diagnostics");
  outcome.csv_path = csv.string();
  return outcome;
}

}  // namespace pushgrad::cli
