#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pushgrad/objective.hpp"

namespace pushgrad::synthdata {

// Heterogeneous synthetic federation: a small number of latent components,
// each a Gaussian input cloud with its own logistic ground-truth separator;
// every client mixes the components with Dirichlet-distributed proportions.
struct SyntheticConfig {
  int n_clients = 3;
  int n_components = 3;
  double dirichlet_alpha = 0.4;
  int input_dim = 5;
  int train_per_client = 100;
  int val_per_client = 100;
  std::uint64_t seed = 0;
};

struct ClientData {
  objective::Dataset train;
  objective::Dataset validation;
  // realized component-mixture weights, kept for heterogeneity diagnostics
  std::vector<double> mixture;
};

// Component c: inputs ~ N(mu_c, I) with mu_c ~ N(0, I); separator w_c ~
// N(0, I); labels ~ Bernoulli(sigmoid(w_c . x)). Client i draws its mixture
// from Dirichlet(alpha, ..., alpha) and samples instances from the mixture.
// Deterministic per seed.
std::vector<ClientData> generate_federation(const SyntheticConfig& config);

// Dataset CSV: header x1,...,xD,label then one row per instance.
void write_dataset_csv(std::ostream& out, const objective::Dataset& data);
objective::Dataset read_dataset_csv(std::istream& in);
void save_dataset_csv(const std::string& path, const objective::Dataset& data);
objective::Dataset load_dataset_csv(const std::string& path);

}  // namespace pushgrad::synthdata
