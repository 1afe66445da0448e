#include "pushgrad/objective.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pushgrad/kernels.hpp"

namespace pushgrad::objective {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(t)) without overflow; for large t the +1 is lost anyway
double softplus(double t) { return t > 35.0 ? t : std::log1p(std::exp(t)); }

void check_finite(const Dataset& data, const char* what) {
  for (const Instance& inst : data) {
    if (inst.label != 0 && inst.label != 1)
      throw std::invalid_argument(std::string(what) + ": label must be 0 or 1");
    for (double v : inst.input)
      if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

void check_dims(const Dataset& data, int dim, const char* what) {
  for (const Instance& inst : data)
    if (static_cast<int>(inst.input.size()) != dim)
      throw std::invalid_argument(std::string(what) + ": inconsistent input dimension");
}

void check_batch(Batch batch, int data_size) {
  if (batch.empty()) throw std::invalid_argument("batch must be nonempty");
  for (int k : batch)
    if (k < 0 || k >= data_size) throw std::invalid_argument("batch index out of range");
}

void check_positive_lambda(std::span<const double> lambda) {
  for (double v : lambda)
    if (!(v > 0.0))
      throw std::invalid_argument("RegularizedLogisticCost: lambda must be elementwise positive");
}

// true when the batch is literally the cached 0..N-1 sequence, which unlocks
// the contiguous feature-major path
bool is_full(Batch batch, Batch full) {
  return batch.data() == full.data() && batch.size() == full.size();
}

double validation_bce(const FeatureMatrix& feat, std::span<const double> x) {
  std::vector<double> m(feat.count);
  feat.margins(x, m);
  double total = 0.0;
  for (int j = 0; j < feat.count; ++j)
    total += softplus(m[j]) - feat.labels[j] * m[j];
  return total;
}

// gx = sum over validation of (sigma(margin) - label) * input
void validation_bce_grad(const FeatureMatrix& feat, std::span<const double> x,
                         std::span<double> gx) {
  std::vector<double> m(feat.count);
  feat.margins(x, m);
  for (int j = 0; j < feat.count; ++j) m[j] = sigmoid(m[j]) - feat.labels[j];
  for (int a = 0; a < feat.dim; ++a)
    gx[a] = kernels::dot(feat.col(a).data(), m.data(), m.size());
}

}  // namespace

double bce_loss(int label, double margin) { return softplus(margin) - label * margin; }

ClientCost::ClientCost(Dataset train, Dataset validation)
    : train_(std::move(train)), validation_(std::move(validation)) {
  if (train_.empty()) throw std::invalid_argument("ClientCost: empty training set");
  x_dim_ = static_cast<int>(train_[0].input.size());
  if (x_dim_ == 0) throw std::invalid_argument("ClientCost: zero-dimensional inputs");
  check_finite(train_, "train");
  check_finite(validation_, "validation");
  check_dims(train_, x_dim_, "train");
  check_dims(validation_, x_dim_, "validation");
  full_batch_.resize(train_.size());
  std::iota(full_batch_.begin(), full_batch_.end(), 0);
}

void ClientCost::require_shapes(std::span<const double> x, std::span<const double> lambda) const {
  if (static_cast<int>(x.size()) != x_dim_)
    throw std::invalid_argument("ClientCost: x has wrong dimension");
  if (static_cast<int>(lambda.size()) != lambda_dim_)
    throw std::invalid_argument("ClientCost: lambda has wrong dimension");
}

FeatureMatrix::FeatureMatrix(const Dataset& data)
    : dim(data.empty() ? 0 : static_cast<int>(data[0].input.size())),
      count(static_cast<int>(data.size())) {
  cols.resize(static_cast<std::size_t>(dim) * count);
  labels.resize(count);
  for (int j = 0; j < count; ++j) {
    labels[j] = static_cast<double>(data[j].label);
    for (int a = 0; a < dim; ++a) cols[static_cast<std::size_t>(a) * count + j] = data[j].input[a];
  }
}

void FeatureMatrix::margins(std::span<const double> x, std::span<double> margins_out) const {
  std::fill(margins_out.begin(), margins_out.end(), 0.0);
  for (int a = 0; a < dim; ++a)
    kernels::axpy(x[a], col(a).data(), margins_out.data(), margins_out.size());
}

RegularizedLogisticCost::RegularizedLogisticCost(Dataset train, Dataset validation)
    : ClientCost(std::move(train), std::move(validation)), train_feat_(train_),
      val_feat_(validation_) {
  lambda_dim_ = x_dim_;
}

double RegularizedLogisticCost::inner_value(std::span<const double> x,
                                            std::span<const double> lambda, Batch batch) const {
  require_shapes(x, lambda);
  check_positive_lambda(lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  double data_term = 0.0;
  for (int k : batch) {
    const double m = kernels::dot(x.data(), train_[k].input.data(), x.size());
    data_term += softplus(m) - train_[k].label * m;
  }
  data_term /= static_cast<double>(batch.size());
  double reg = 0.0;
  for (int a = 0; a < x_dim_; ++a) reg += 0.5 * lambda[a] * x[a] * x[a];
  return data_term + reg;
}

void RegularizedLogisticCost::inner_grad(std::span<const double> x, std::span<const double> lambda,
                                         Batch batch, std::span<double> out) const {
  require_shapes(x, lambda);
  check_positive_lambda(lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (is_full(batch, full_batch())) {
    std::vector<double> w(train_feat_.count);
    train_feat_.margins(x, w);
    for (int j = 0; j < train_feat_.count; ++j) w[j] = sigmoid(w[j]) - train_feat_.labels[j];
    for (int a = 0; a < x_dim_; ++a)
      out[a] = inv * kernels::dot(train_feat_.col(a).data(), w.data(), w.size());
  } else {
    std::fill(out.begin(), out.end(), 0.0);
    for (int k : batch) {
      const Instance& inst = train_[k];
      const double m = kernels::dot(x.data(), inst.input.data(), x.size());
      kernels::axpy(inv * (sigmoid(m) - inst.label), inst.input.data(), out.data(), out.size());
    }
  }
  for (int a = 0; a < x_dim_; ++a) out[a] += lambda[a] * x[a];
}

void RegularizedLogisticCost::hessian_vec(std::span<const double> x, std::span<const double> lambda,
                                          Batch batch, std::span<const double> u,
                                          std::span<double> out) const {
  require_shapes(x, lambda);
  check_positive_lambda(lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (is_full(batch, full_batch())) {
    std::vector<double> m(train_feat_.count), mu(train_feat_.count);
    train_feat_.margins(x, m);
    train_feat_.margins(u, mu);
    for (int j = 0; j < train_feat_.count; ++j) {
      const double p = sigmoid(m[j]);
      mu[j] *= p * (1.0 - p);
    }
    for (int a = 0; a < x_dim_; ++a)
      out[a] = inv * kernels::dot(train_feat_.col(a).data(), mu.data(), mu.size());
  } else {
    std::fill(out.begin(), out.end(), 0.0);
    for (int k : batch) {
      const Instance& inst = train_[k];
      const double p = sigmoid(kernels::dot(x.data(), inst.input.data(), x.size()));
      const double coeff = p * (1.0 - p) * kernels::dot(u.data(), inst.input.data(), u.size());
      kernels::axpy(inv * coeff, inst.input.data(), out.data(), out.size());
    }
  }
  for (int a = 0; a < x_dim_; ++a) out[a] += lambda[a] * u[a];
}

void RegularizedLogisticCost::cross_jacobian_vec(std::span<const double> x,
                                                 std::span<const double> lambda, Batch batch,
                                                 std::span<const double> u,
                                                 std::span<double> out) const {
  require_shapes(x, lambda);
  check_positive_lambda(lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  // only the regularizer couples x and lambda: the (a,c) entry of the
  // cross-derivative is delta_ac * x_a
  for (int a = 0; a < x_dim_; ++a) out[a] = x[a] * u[a];
}

double RegularizedLogisticCost::outer_value(std::span<const double> x,
                                            std::span<const double>) const {
  return validation_bce(val_feat_, x);
}

void RegularizedLogisticCost::outer_grads(std::span<const double> x, std::span<const double>,
                                          std::span<double> gx, std::span<double> glambda) const {
  validation_bce_grad(val_feat_, x, gx);
  std::fill(glambda.begin(), glambda.end(), 0.0);
}

InstanceMaskCost::InstanceMaskCost(Dataset train, Dataset validation, double ridge)
    : ClientCost(std::move(train), std::move(validation)), train_feat_(train_),
      val_feat_(validation_), ridge_(ridge) {
  if (ridge < 0.0) throw std::invalid_argument("InstanceMaskCost: ridge must be >= 0");
  lambda_dim_ = static_cast<int>(train_.size());
}

double InstanceMaskCost::inner_value(std::span<const double> x, std::span<const double> lambda,
                                     Batch batch) const {
  require_shapes(x, lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  double data_term = 0.0;
  for (int k : batch) {
    const double m = kernels::dot(x.data(), train_[k].input.data(), x.size());
    data_term += lambda[k] * (softplus(m) - train_[k].label * m);
  }
  data_term /= static_cast<double>(batch.size());
  return data_term + 0.5 * ridge_ * kernels::dot(x.data(), x.data(), x.size());
}

void InstanceMaskCost::inner_grad(std::span<const double> x, std::span<const double> lambda,
                                  Batch batch, std::span<double> out) const {
  require_shapes(x, lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (is_full(batch, full_batch())) {
    std::vector<double> w(train_feat_.count);
    train_feat_.margins(x, w);
    for (int j = 0; j < train_feat_.count; ++j)
      w[j] = lambda[j] * (sigmoid(w[j]) - train_feat_.labels[j]);
    for (int a = 0; a < x_dim_; ++a)
      out[a] = inv * kernels::dot(train_feat_.col(a).data(), w.data(), w.size());
  } else {
    std::fill(out.begin(), out.end(), 0.0);
    for (int k : batch) {
      const Instance& inst = train_[k];
      const double m = kernels::dot(x.data(), inst.input.data(), x.size());
      kernels::axpy(inv * lambda[k] * (sigmoid(m) - inst.label), inst.input.data(), out.data(),
                    out.size());
    }
  }
  kernels::axpy(ridge_, x.data(), out.data(), out.size());
}

void InstanceMaskCost::hessian_vec(std::span<const double> x, std::span<const double> lambda,
                                   Batch batch, std::span<const double> u,
                                   std::span<double> out) const {
  require_shapes(x, lambda);
  check_batch(batch, static_cast<int>(train_.size()));
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (is_full(batch, full_batch())) {
    std::vector<double> m(train_feat_.count), mu(train_feat_.count);
    train_feat_.margins(x, m);
    train_feat_.margins(u, mu);
    for (int j = 0; j < train_feat_.count; ++j) {
      const double p = sigmoid(m[j]);
      mu[j] *= lambda[j] * p * (1.0 - p);
    }
    for (int a = 0; a < x_dim_; ++a)
      out[a] = inv * kernels::dot(train_feat_.col(a).data(), mu.data(), mu.size());
  } else {
    std::fill(out.begin(), out.end(), 0.0);
    for (int k : batch) {
      const Instance& inst = train_[k];
      const double p = sigmoid(kernels::dot(x.data(), inst.input.data(), x.size()));
      const double coeff =
          lambda[k] * p * (1.0 - p) * kernels::dot(u.data(), inst.input.data(), u.size());
      kernels::axpy(inv * coeff, inst.input.data(), out.data(), out.size());
    }
  }
  kernels::axpy(ridge_, u.data(), out.data(), out.size());
}

void InstanceMaskCost::cross_jacobian_vec(std::span<const double> x, std::span<const double>,
                                          Batch batch, std::span<const double> u,
                                          std::span<double> out) const {
  check_batch(batch, static_cast<int>(train_.size()));
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::fill(out.begin(), out.end(), 0.0);
  if (is_full(batch, full_batch())) {
    std::vector<double> m(train_feat_.count), mu(train_feat_.count);
    train_feat_.margins(x, m);
    train_feat_.margins(u, mu);
    for (int j = 0; j < train_feat_.count; ++j)
      out[j] = inv * (sigmoid(m[j]) - train_feat_.labels[j]) * mu[j];
  } else {
    for (int k : batch) {
      const Instance& inst = train_[k];
      const double p = sigmoid(kernels::dot(x.data(), inst.input.data(), x.size()));
      out[k] += inv * (p - inst.label) * kernels::dot(u.data(), inst.input.data(), u.size());
    }
  }
}

double InstanceMaskCost::outer_value(std::span<const double> x, std::span<const double>) const {
  return validation_bce(val_feat_, x);
}

void InstanceMaskCost::outer_grads(std::span<const double> x, std::span<const double>,
                                   std::span<double> gx, std::span<double> glambda) const {
  validation_bce_grad(val_feat_, x, gx);
  std::fill(glambda.begin(), glambda.end(), 0.0);
}

BatchSampler::BatchSampler(std::uint64_t seed, int data_size)
    : rng_(seed), data_size_(data_size) {
  if (data_size <= 0) throw std::invalid_argument("BatchSampler: empty data");
}

void BatchSampler::sample(std::span<int> out) {
  std::uniform_int_distribution<int> pick(0, data_size_ - 1);
  for (int& slot : out) slot = pick(rng_);
}

}  // namespace pushgrad::objective
