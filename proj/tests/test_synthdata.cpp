#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pushgrad/synthdata.hpp"

using namespace pushgrad;
using synthdata::SyntheticConfig;

TEST_CASE("federation has the configured shape and is reproducible") {
  SyntheticConfig config;
  config.n_clients = 3;
  config.seed = 12;
  auto a = synthdata::generate_federation(config);
  auto b = synthdata::generate_federation(config);

  REQUIRE(a.size() == 3);
  for (const auto& client : a) {
    CHECK(client.train.size() == 100);
    CHECK(client.validation.size() == 100);
    for (const auto& inst : client.train) CHECK(inst.input.size() == 5);
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].train.size(); ++j) {
      CHECK(a[i].train[j].label == b[i].train[j].label);
      CHECK(a[i].train[j].input == b[i].train[j].input);
    }
  }
}

TEST_CASE("different seeds give different data") {
  SyntheticConfig config;
  config.seed = 1;
  auto a = synthdata::generate_federation(config);
  config.seed = 2;
  auto c = synthdata::generate_federation(config);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size() && !any_diff; ++i)
    for (std::size_t j = 0; j < a[i].train.size() && !any_diff; ++j)
      if (a[i].train[j].input != c[i].train[j].input) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("huge dirichlet concentration approaches the uniform mixture") {
  SyntheticConfig config;
  config.n_clients = 100;
  config.train_per_client = 1;
  config.val_per_client = 1;
  config.dirichlet_alpha = 1e6;
  config.seed = 5;
  auto clients = synthdata::generate_federation(config);
  double max_dev = 0.0;
  for (const auto& client : clients)
    for (double w : client.mixture) max_dev = std::max(max_dev, std::abs(w - 1.0 / 3.0));
  CHECK(max_dev < 0.05);
}

TEST_CASE("pooled label balance for default seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig config;
    config.seed = seed;
    auto clients = synthdata::generate_federation(config);
    int positives = 0, total = 0;
    for (const auto& client : clients) {
      for (const auto& inst : client.train) {
        positives += inst.label;
        ++total;
      }
      for (const auto& inst : client.validation) {
        positives += inst.label;
        ++total;
      }
    }
    const double rate = static_cast<double>(positives) / total;
    CHECK(rate >= 0.2);
    CHECK(rate <= 0.8);
  }
}

TEST_CASE("clients are heterogeneous in mixture space") {
  double tv_sum = 0.0;
  int pairs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig config;
    config.seed = seed;
    auto clients = synthdata::generate_federation(config);
    for (std::size_t i = 0; i < clients.size(); ++i) {
      for (std::size_t j = i + 1; j < clients.size(); ++j) {
        double tv = 0.0;
        for (std::size_t c = 0; c < clients[i].mixture.size(); ++c)
          tv += 0.5 * std::abs(clients[i].mixture[c] - clients[j].mixture[c]);
        tv_sum += tv;
        ++pairs;
      }
    }
  }
  CHECK(tv_sum / pairs >= 0.1);
}

TEST_CASE("config validation") {
  SyntheticConfig config;
  config.n_clients = 0;
  CHECK_THROWS_AS(synthdata::generate_federation(config), std::invalid_argument);
  config.n_clients = 2;
  config.dirichlet_alpha = 0.0;
  CHECK_THROWS_AS(synthdata::generate_federation(config), std::invalid_argument);
}

TEST_CASE("dataset CSV round-trip preserves every bit") {
  SyntheticConfig config;
  config.n_clients = 1;
  config.seed = 9;
  auto clients = synthdata::generate_federation(config);

  std::stringstream buf;
  synthdata::write_dataset_csv(buf, clients[0].train);
  objective::Dataset back = synthdata::read_dataset_csv(buf);

  REQUIRE(back.size() == clients[0].train.size());
  for (std::size_t j = 0; j < back.size(); ++j) {
    CHECK(back[j].label == clients[0].train[j].label);
    CHECK(back[j].input == clients[0].train[j].input);  //%.17g round-trips doubles
  }
}

TEST_CASE("dataset CSV rejects malformed input") {
  {
    std::stringstream buf("x1,x2\n1.0,2.0\n");  // no label column
    CHECK_THROWS_AS(synthdata::read_dataset_csv(buf), std::runtime_error);
  }
  {
    std::stringstream buf("x1,label\n1.0\n");  // short row
    CHECK_THROWS_AS(synthdata::read_dataset_csv(buf), std::runtime_error);
  }
  {
    std::stringstream buf("x1,label\n1.0,7\n");  // non-binary label
    CHECK_THROWS_AS(synthdata::read_dataset_csv(buf), std::runtime_error);
  }
}
