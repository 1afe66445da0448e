#include "pushgrad/influence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pushgrad::influence {

namespace {

double total_outer_value(const innersolve::ClientSet& clients,
                         const std::vector<std::vector<double>>& lambda,
                         std::span<const double> x) {
  double total = 0.0;
  for (std::size_t k = 0; k < clients.size(); ++k)
    total += clients[k]->outer_value(x, lambda[k]);
  return total;
}

bool absolute_order(const InfluenceRecord& a, const InfluenceRecord& b) {
  const double ma = std::abs(a.predicted);
  const double mb = std::abs(b.predicted);
  if (ma != mb) return ma > mb;
  if (a.client != b.client) return a.client < b.client;
  return a.instance < b.instance;
}

}  // namespace

std::vector<InfluenceRecord> predict_influence(
    const std::vector<std::vector<double>>& hypergradient) {
  std::vector<InfluenceRecord> records;
  for (std::size_t i = 0; i < hypergradient.size(); ++i)
    for (std::size_t k = 0; k < hypergradient[i].size(); ++k) {
      InfluenceRecord rec;
      rec.client = static_cast<int>(i);
      rec.instance = static_cast<int>(k);
      rec.predicted = -hypergradient[i][k];
      records.push_back(rec);
    }
  return records;
}

std::vector<InfluenceRecord> select_top_k(std::vector<InfluenceRecord> records, int top_k) {
  if (top_k < 0) throw std::invalid_argument("select_top_k: negative top_k");
  if (static_cast<std::size_t>(top_k) > records.size())
    throw std::invalid_argument("select_top_k: fewer records than top_k");
  std::sort(records.begin(), records.end(), absolute_order);
  records.resize(top_k);
  return records;
}

int retrain_influence_oracle(const innersolve::ClientSet& clients,
                             const std::vector<std::vector<double>>& mask,
                             std::vector<InfluenceRecord>& targets,
                             const std::vector<double>& x_star,
                             const innersolve::NewtonOptions& newton) {
  const double f_before = total_outer_value(clients, mask, x_star);
  innersolve::NewtonOptions warm = newton;
  warm.x0 = x_star;

  std::vector<std::vector<double>> working = mask;
  int retrained = 0;
  for (InfluenceRecord& target : targets) {
    if (target.client < 0 || target.client >= static_cast<int>(mask.size()) ||
        target.instance < 0 ||
        target.instance >= static_cast<int>(mask[target.client].size()))
      throw std::invalid_argument("retrain_influence_oracle: target out of range");
    const double saved = working[target.client][target.instance];
    working[target.client][target.instance] = 0.0;
    try {
      const std::vector<double> x_after = innersolve::newton_consensus_solve(clients, working, warm);
      target.actual = total_outer_value(clients, working, x_after) - f_before;
      target.retrained = true;
      ++retrained;
    } catch (const std::runtime_error&) {
      target.retrained = false;  // flagged and skipped, scoring ignores it
    }
    working[target.client][target.instance] = saved;
  }
  return retrained;
}

InfluenceReport score_report(std::vector<InfluenceRecord> records) {
  InfluenceReport report;
  std::sort(records.begin(), records.end(), absolute_order);
  report.records = std::move(records);

  double actual_sum = 0.0;
  int scored = 0;
  for (const InfluenceRecord& rec : report.records)
    if (rec.retrained) {
      actual_sum += rec.actual;
      ++scored;
    }
  if (scored == 0) {
    report.r2_defined = false;
    report.f1 = 0.0;
    return report;
  }
  const double actual_mean = actual_sum / scored;

  double ss_res = 0.0, ss_tot = 0.0;
  int tp = 0, fp = 0, fn = 0;
  for (const InfluenceRecord& rec : report.records) {
    if (!rec.retrained) continue;
    const double res = rec.actual - rec.predicted;
    ss_res += res * res;
    const double dev = rec.actual - actual_mean;
    ss_tot += dev * dev;
    const bool predicted_neg = rec.predicted < 0.0;
    const bool actual_neg = rec.actual < 0.0;
    if (predicted_neg && actual_neg) ++tp;
    if (predicted_neg && !actual_neg) ++fp;
    if (!predicted_neg && actual_neg) ++fn;
  }

  if (ss_tot > 0.0) {
    report.r2 = 1.0 - ss_res / ss_tot;
  } else {
    report.r2_defined = false;
  }
  if (tp + fp + fn == 0) {
    report.f1 = 1.0;  // no positives anywhere: nothing to miss
  } else if (tp == 0) {
    report.f1 = 0.0;
  } else {
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / (tp + fn);
    report.f1 = 2.0 * precision * recall / (precision + recall);
  }
  return report;
}

}  // namespace pushgrad::influence
