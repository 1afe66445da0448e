#pragma once

#include <vector>

#include "pushgrad/innersolve.hpp"

namespace pushgrad::influence {

// One training instance's effect on the total validation cost F when the
// instance is removed: predicted via the hyper-gradient of its mask weight,
// actual via leave-one-out retraining.
struct InfluenceRecord {
  int client = 0;
  int instance = 0;
  double predicted = 0.0;
  double actual = 0.0;
  bool retrained = false;  // false until the oracle fills `actual`
};

struct InfluenceReport {
  std::vector<InfluenceRecord> records;  // sorted by |predicted| descending
  double r2 = 0.0;
  bool r2_defined = true;  // false when the actual deltas have zero variance
  double f1 = 0.0;
};

// Predicted delta for removing instance (i, k): the k-th entry of the
// negated per-client hyper-gradient. `hypergradient` is per client with one
// entry per training instance (the mask-weight layout).
std::vector<InfluenceRecord> predict_influence(
    const std::vector<std::vector<double>>& hypergradient);

// Keeps the top_k records by |predicted|, ties broken by (client, instance)
// ascending; result sorted in that order.
std::vector<InfluenceRecord> select_top_k(std::vector<InfluenceRecord> records, int top_k);

// For each target: zero its mask entry, re-solve the pooled problem (Newton,
// warm-started from x_star), and record F_after - F_before in `actual`. The
// mask is restored between targets. Targets whose re-solve fails are left
// with retrained = false. Returns the number retrained.
int retrain_influence_oracle(const innersolve::ClientSet& clients,
                             const std::vector<std::vector<double>>& mask,
                             std::vector<InfluenceRecord>& targets,
                             const std::vector<double>& x_star,
                             const innersolve::NewtonOptions& newton = {});

// R^2 of actual against predicted over the retrained records, and the F1
// score treating "removal decreases validation loss" (delta < 0) as the
// positive class. Records without a retrained actual are excluded from both
// statistics but kept in the report.
InfluenceReport score_report(std::vector<InfluenceRecord> records);

}  // namespace pushgrad::influence
