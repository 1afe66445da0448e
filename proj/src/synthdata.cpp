#include "pushgrad/synthdata.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pushgrad/kernels.hpp"
#include "pushgrad/rng.hpp"

namespace pushgrad::synthdata {

namespace {

void validate(const SyntheticConfig& c) {
  if (c.n_clients <= 0 || c.n_components <= 0 || c.input_dim <= 0 || c.train_per_client <= 0 ||
      c.val_per_client <= 0)
    throw std::invalid_argument("SyntheticConfig: all counts must be positive");
  if (!(c.dirichlet_alpha > 0.0))
    throw std::invalid_argument("SyntheticConfig: dirichlet_alpha must be > 0");
}

std::vector<double> gaussian_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> dirichlet(std::mt19937_64& rng, int k, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> w(k);
  double total = 0.0;
  for (double& x : w) {
    x = gamma(rng);
    total += x;
  }
  // a zero total has probability zero but a tiny alpha can underflow all draws
  if (!(total > 0.0)) {
    std::fill(w.begin(), w.end(), 1.0 / k);
    return w;
  }
  for (double& x : w) x /= total;
  return w;
}

int pick_component(std::mt19937_64& rng, const std::vector<double>& mixture) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  for (std::size_t c = 0; c < mixture.size(); ++c) {
    acc += mixture[c];
    if (u < acc) return static_cast<int>(c);
  }
  return static_cast<int>(mixture.size()) - 1;
}

objective::Instance draw_instance(std::mt19937_64& rng, const std::vector<double>& mu,
                                  const std::vector<double>& w) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  objective::Instance inst;
  inst.input.resize(mu.size());
  for (std::size_t a = 0; a < mu.size(); ++a) inst.input[a] = mu[a] + normal(rng);
  const double p = objective::sigmoid(kernels::dot(w.data(), inst.input.data(), w.size()));
  inst.label = unif(rng) < p ? 1 : 0;
  return inst;
}

}  // namespace

std::vector<ClientData> generate_federation(const SyntheticConfig& config) {
  validate(config);
  std::mt19937_64 rng(rng::derive(config.seed, "synthdata"));

  std::vector<std::vector<double>> mu(config.n_components), sep(config.n_components);
  for (int c = 0; c < config.n_components; ++c) {
    mu[c] = gaussian_vector(rng, config.input_dim);
    sep[c] = gaussian_vector(rng, config.input_dim);
  }

  std::vector<ClientData> clients(config.n_clients);
  for (ClientData& client : clients) {
    client.mixture = dirichlet(rng, config.n_components, config.dirichlet_alpha);
    client.train.reserve(config.train_per_client);
    client.validation.reserve(config.val_per_client);
    for (int j = 0; j < config.train_per_client; ++j) {
      const int c = pick_component(rng, client.mixture);
      client.train.push_back(draw_instance(rng, mu[c], sep[c]));
    }
    for (int j = 0; j < config.val_per_client; ++j) {
      const int c = pick_component(rng, client.mixture);
      client.validation.push_back(draw_instance(rng, mu[c], sep[c]));
    }
  }
  return clients;
}

void write_dataset_csv(std::ostream& out, const objective::Dataset& data) {
  if (data.empty()) throw std::invalid_argument("write_dataset_csv: empty dataset");
  const int dim = static_cast<int>(data[0].input.size());
  for (int a = 0; a < dim; ++a) out << 'x' << (a + 1) << ',';
  out << "label\n";
  char buf[64];
  for (const objective::Instance& inst : data) {
    for (double v : inst.input) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << buf << ',';
    }
    out << inst.label << '\n';
  }
}

objective::Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset CSV: missing header");
  int dim = 0;
  {
    std::istringstream header(line);
    std::string fieldname;
    bool saw_label = false;
    while (std::getline(header, fieldname, ',')) {
      if (fieldname == "label") {
        saw_label = true;
      } else if (!fieldname.empty() && fieldname[0] == 'x') {
        ++dim;
      } else {
        throw std::runtime_error("dataset CSV: unexpected column '" + fieldname + "'");
      }
    }
    if (!saw_label || dim == 0) throw std::runtime_error("dataset CSV: malformed header");
  }
  objective::Dataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    objective::Instance inst;
    inst.input.reserve(dim);
    for (int a = 0; a < dim + 1; ++a) {
      if (!std::getline(row, field, ','))
        throw std::runtime_error("dataset CSV line " + std::to_string(lineno) + ": too few fields");
      try {
        if (a < dim) {
          inst.input.push_back(std::stod(field));
        } else {
          inst.label = std::stoi(field);
        }
      } catch (const std::exception&) {
        throw std::runtime_error("dataset CSV line " + std::to_string(lineno) + ": bad field '" +
                                 field + "'");
      }
    }
    if (inst.label != 0 && inst.label != 1)
      throw std::runtime_error("dataset CSV line " + std::to_string(lineno) + ": label not 0/1");
    data.push_back(std::move(inst));
  }
  return data;
}

void save_dataset_csv(const std::string& path, const objective::Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_dataset_csv(out, data);
}

objective::Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  return read_dataset_csv(in);
}

}  // namespace pushgrad::synthdata
